#!/usr/bin/env python3
"""Checks the CLI's exit codes and output plumbing.

usage: cli_exit_codes.py <half binary>
"""
import json
import os
import subprocess
import sys
import tempfile

half = sys.argv[1]
failures = 0


def run(*args):
    return subprocess.run([half, *args], capture_output=True, text=True)


def expect(name, cond, detail=""):
    global failures
    print(("ok   " if cond else "FAIL ") + name + (f": {detail}" if detail and not cond else ""))
    failures += not cond


p = run("run", "downloader", "--deterministic")
expect("clean run exits 0", p.returncode == 0, p.stderr)
p = run("run", "beacon", "--deterministic", "--halt-on-alert")
expect("alert with --halt-on-alert exits 2", p.returncode == 2, p.stderr)
p = run("run", "beacon", "--halt-on-alert")
expect("threaded alert with --halt-on-alert exits 2", p.returncode == 2, p.stderr)
p = run("run", "beacon", "--deterministic")
expect("alert without --halt-on-alert exits 0", p.returncode == 0, p.stderr)
p = run("run", "heap-spray", "--scheme", "prealloc", "--deterministic")
expect("address conflict exits 3", p.returncode == 3, p.stderr)
expect("address conflict is reported", json.loads(p.stdout)["fault"] == "AddressConflict")
p = run("run", "heap-spray", "--deterministic", "--oracle")
expect("--oracle on a matching run exits 0", p.returncode == 0, p.stderr)
p = run("run", "no-such-workload")
expect("unknown workload exits 1", p.returncode == 1)
expect("unknown workload names valid ids", "downloader" in p.stderr, p.stderr)
p = run("run", "downloader", "--buffer-entries", "1")
expect("bad capacity exits 1", p.returncode == 1)
p = run("run", "downloader", "--scheme", "compressed")
expect("bad scheme is a usage error", p.returncode != 0)
p = run("list", "--json")
expect("list --json parses", p.returncode == 0 and len(json.loads(p.stdout)) > 0)
p = run("run", "downloader", "--deterministic", "--dump-analysis-code")
expect("--dump-analysis-code writes to stderr", p.returncode == 0 and "0x" in p.stderr and json.loads(p.stdout))

with tempfile.TemporaryDirectory() as d:
    a, b, c = (os.path.join(d, n) for n in ("a.json", "b.json", "c.json"))
    run("run", "downloader-mix", "--deterministic", "--report", a)
    run("run", "downloader-mix", "--deterministic", "--buffer-entries", "64", "--report", b)
    expect("--report writes the file", os.path.getsize(a) > 0)
    p = run("diff", a, b)
    expect("diff of equal taint results exits 0", p.returncode == 0, p.stdout)
    with open(a) as f:
        r = json.load(f)
    r["db"] += 1
    with open(c, "w") as f:
        json.dump(r, f)
    p = run("diff", a, c)
    expect("diff of differing taint results exits 4", p.returncode == 4, p.stdout)
    spill = os.path.join(d, "spill.bin")
    p = run("run", "downloader", "--deterministic", "--high-water-pages", "1", "--spill-file", spill)
    expect("--spill-file is used", p.returncode == 0 and os.path.getsize(spill) > 0, p.stderr)
    log = os.path.join(d, "alerts.jsonl")
    p = run("run", "beacon", "--deterministic", "--alert-log", log)
    with open(log) as f:
        kinds = [json.loads(l)["kind"] for l in f if l.strip()]
    expect("--alert-log writes one line per alert", "TaintedIndirectTarget" in kinds and len(kinds) == json.loads(p.stdout)["alerts"], str(kinds))
    p = run("sweep", "membound", "--axis", "buffer-entries", "--values", "1024,65536", "--deterministic")
    expect("sweep prints one csv row per value", p.returncode == 0 and len(p.stdout.strip().splitlines()) == 3)

sys.exit(1 if failures else 0)
