#include "half/recorder.hpp"

#include <sstream>

namespace half {

Recorder::Recorder(Instrumenter& code, ShadowMemory& shadow, SyncState& sync, ChannelConfig channel_cfg,
                   RecorderCallbacks callbacks)
    : code_(code), shadow_(shadow), sync_(sync), channel_cfg_(channel_cfg), cb_(std::move(callbacks)) {
  validate(channel_cfg_);
}

void Recorder::emit(ThreadRec& t, Word w) {
  if (in_reserved_range(w)) {
    std::ostringstream os;
    os << "recorded value 0x" << std::hex << w << " falls in the reserved sentinel range";
    throw VmFault(FaultKind::SentinelCollision, os.str());
  }
  t.channel->write(w);
}

void Recorder::before_instruction(const MachineState& st, const Instruction& in) {
  auto& t = threads_.at(st.tid);
  if (!t.block || t.next >= t.block->block.instructions.size()) {
    t.block = &code_.block_at(st.pc);
    t.next = 0;
    emit(t, t.block->analysis.address);
  }
  const auto& plan = t.block->plan;
  const std::size_t i = t.next++;
  const std::size_t end = i + 1 < plan.first_capture.size() ? plan.first_capture[i + 1] : plan.captures.size();
  for (std::size_t k = plan.first_capture[i]; k < end;) {
    const Capture& c = plan.captures[k];
    if (c.kind != CaptureKind::TaskArgs) {
      emit(t, capture_value(c, in, st));
      ++k;
      continue;
    }
    if (in.op == Opcode::SYSCALL) break;  // written after the syscall completes
    const TaskSpec* spec = code_.bindings().for_site(st.pc);
    for (Word w : site_task_args(*spec, in, st)) emit(t, w);
    k += 4;
  }
}

void Recorder::after_syscall(const MachineState& st, const Instruction& in, const SyscallEffect& eff) {
  auto& t = threads_.at(st.tid);
  if (syscall_has_task_args(in.sys))
    for (Word w : syscall_task_args(code_.bindings().for_syscall(in.sys), eff)) emit(t, w);
  // SPAWN orders the parent's earlier records before anything the child does.
  if (in.sys == SyscallKind::SPAWN && sync_.sync_submit()) t.channel->submit_current(SubmitReason::SyncWait);
}

void Recorder::on_thread_start(ThreadId tid) {
  if (tid != threads_.size()) throw std::logic_error("thread ids must be dense");
  ThreadRec t;
  t.channel = std::make_unique<RecordChannel>(channel_cfg_);
  threads_.push_back(std::move(t));
  sync_.register_thread(tid, *threads_.back().channel);
  if (cb_.thread_started) cb_.thread_started(tid, *threads_.back().channel);
}

void Recorder::on_thread_exit(ThreadId tid, bool aborted) { threads_.at(tid).channel->close(aborted); }

void Recorder::on_signal(ThreadId tid) { sync_.on_signal(tid); }

void Recorder::on_wait_return(ThreadId tid) { sync_.on_wait(tid); }

void Recorder::on_alloc(ThreadId, Addr base, std::uint64_t size) { shadow_.mirror_alloc(base, size); }

void Recorder::on_free(ThreadId tid, Addr base, std::uint64_t size) {
  // A freed range may be reallocated by another thread; order this thread's
  // pending records first.
  if (sync_.sync_submit()) threads_.at(tid).channel->submit_current(SubmitReason::SyncWait);
  shadow_.mirror_free(base, size);
}

void Recorder::on_quantum_end() {
  if (cb_.quantum_end) cb_.quantum_end();
}

bool Recorder::should_stop() { return cb_.should_stop && cb_.should_stop(); }

}  // namespace half
