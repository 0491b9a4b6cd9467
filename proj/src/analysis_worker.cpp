#include "half/analysis_worker.hpp"

#include <sstream>

namespace half {

AnalysisWorker::AnalysisWorker(ThreadId tid, RecordChannel& channel, const Instrumenter& code, MemoryTaint& mem,
                               TaskDispatcher& tasks)
    : tid_(tid), channel_(channel), code_(code), mem_(mem), tasks_(tasks) {}

void AnalysisWorker::execute() {
  TaintContext ctx{mem_, regs, tasks_, tid_, cur_->block.start};
  for (const auto& op : cur_->analysis.ops) {
    apply_taint_op(op, entries_, ctx);
    ++counters_.ops_applied;
  }
  ++counters_.blocks_executed;
  cur_ = nullptr;
  entries_.clear();
}

void AnalysisWorker::on_word(Word w) {
  if (!cur_) {
    cur_ = code_.find_by_code(w);
    if (!cur_) {
      std::ostringstream os;
      os << "thread " << tid_ << ": record stream names unknown analysis block 0x" << std::hex << w;
      throw WorkerFault(os.str());
    }
    ++counters_.headers;
    entries_.push_back(w);
  } else {
    entries_.push_back(w);
    ++counters_.data_consumed;
  }
  if (entries_.size() == cur_->analysis.expected_entry_count) execute();
}

void AnalysisWorker::feed(const StreamEvent& ev) {
  switch (ev.kind) {
    case EventKind::Word: on_word(ev.value); return;
    case EventKind::SwitchToNext: ++counters_.switches; return;
    case EventKind::EndOfStream:
      finished_ = true;
      if (cur_) {
        if (!channel_.aborted()) {
          std::ostringstream os;
          os << "thread " << tid_ << ": record stream ended inside block 0x" << std::hex << cur_->block.start << " ("
             << std::dec << entries_.size() << " of " << cur_->analysis.expected_entry_count << " entries)";
          throw WorkerFault(os.str());
        }
        counters_.truncated = true;
        cur_ = nullptr;
        entries_.clear();
      }
      return;
  }
}

void AnalysisWorker::run() {
  while (!finished_) feed(channel_.next());
}

bool AnalysisWorker::pump(std::uint64_t until_generation) {
  while (!finished_) {
    if (until_generation != UINT64_MAX && channel_.finished_generations() > until_generation) break;
    auto ev = channel_.try_next();
    if (!ev) break;
    feed(*ev);
  }
  return finished_;
}

}  // namespace half
