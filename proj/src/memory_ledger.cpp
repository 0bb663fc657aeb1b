#include "holotile/memory_ledger.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "holotile/errors.hpp"

namespace holotile::metrics {

namespace {
constexpr std::array<std::string_view, kStageCount> kNames = {
    "asm", "generator", "encoder", "merge_sr", "autodiff_tape", "unattributed"};
}

std::string_view stage_name(Stage s) { return kNames[static_cast<std::size_t>(s)]; }

Stage stage_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kStageCount; ++i) {
    if (kNames[i] == name) return static_cast<Stage>(i);
  }
  throw UsageError("unknown ledger stage '" + std::string(name) + "'");
}

MemoryLedger::MemoryLedger() : state_(std::make_shared<State>()) {}

void MemoryLedger::charge_state(State& s, Stage stage, std::int64_t bytes) {
  std::lock_guard lock(s.mu);
  auto i = static_cast<std::size_t>(stage);
  s.live[i] += bytes;
  s.total_live += bytes;
  s.peak[i] = std::max(s.peak[i], s.live[i]);
  s.total_peak = std::max(s.total_peak, s.total_live);
}

void MemoryLedger::record(Stage stage, std::int64_t bytes) {
  if (bytes < 0) throw DomainError("ledger reading must be non-negative");
  std::lock_guard lock(state_->mu);
  auto i = static_cast<std::size_t>(stage);
  state_->total_live += bytes - state_->live[i];
  state_->live[i] = bytes;
  state_->peak[i] = std::max(state_->peak[i], bytes);
  state_->total_peak = std::max(state_->total_peak, state_->total_live);
}

void MemoryLedger::record(std::string_view stage, std::int64_t bytes) {
  record(stage_from_name(stage), bytes);
}

void MemoryLedger::charge(Stage stage, std::int64_t bytes) { charge_state(*state_, stage, bytes); }
void MemoryLedger::release(Stage stage, std::int64_t bytes) { charge_state(*state_, stage, -bytes); }

void MemoryLedger::set_grid(int height, int width, int scale) {
  std::lock_guard lock(state_->mu);
  state_->height = height;
  state_->width = width;
  state_->scale = scale;
}

void MemoryLedger::reset() {
  std::lock_guard lock(state_->mu);
  // Live bytes stay (buffers may still be alive); peaks restart from them.
  state_->peak = state_->live;
  state_->total_peak = state_->total_live;
}

LedgerReport MemoryLedger::report() const {
  std::lock_guard lock(state_->mu);
  LedgerReport r;
  for (std::size_t i = 0; i < kStageCount; ++i) {
    r.rows.push_back({static_cast<Stage>(i), state_->live[i], state_->peak[i]});
    r.sum_of_peaks += state_->peak[i];
  }
  r.overall_peak = state_->total_peak;
  r.height = state_->height;
  r.width = state_->width;
  r.scale = state_->scale;
  return r;
}

std::int64_t LedgerReport::peak(Stage s) const {
  for (const auto& row : rows)
    if (row.stage == s) return row.peak_bytes;
  return 0;
}

std::string LedgerReport::to_text() const {
  std::ostringstream os;
  os << "grid " << height << "x" << width << "  scale x" << scale << "\n";
  os << std::left << std::setw(16) << "stage" << std::right << std::setw(14) << "peak_bytes"
     << std::setw(12) << "peak_MiB" << "\n";
  auto line = [&](std::string_view name, std::int64_t bytes) {
    os << std::left << std::setw(16) << name << std::right << std::setw(14) << bytes
       << std::setw(12) << std::fixed << std::setprecision(3)
       << static_cast<double>(bytes) / (1024.0 * 1024.0) << "\n";
  };
  for (const auto& row : rows) line(stage_name(row.stage), row.peak_bytes);
  line("backbone", peak(Stage::Generator) + peak(Stage::Encoder));
  line("sum_of_peaks", sum_of_peaks);
  line("overall_peak", overall_peak);
  return os.str();
}

std::string LedgerReport::to_csv() const {
  std::ostringstream os;
  os << "stage,peak_bytes\n";
  for (const auto& row : rows) os << stage_name(row.stage) << "," << row.peak_bytes << "\n";
  os << "backbone," << peak(Stage::Generator) + peak(Stage::Encoder) << "\n";
  os << "sum_of_peaks," << sum_of_peaks << "\n";
  os << "overall_peak," << overall_peak << "\n";
  return os.str();
}

std::string LedgerReport::to_json() const {
  std::ostringstream os;
  os << "{\"height\":" << height << ",\"width\":" << width << ",\"scale\":" << scale
     << ",\"stages\":{";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i) os << ",";
    os << "\"" << stage_name(rows[i].stage) << "\":" << rows[i].peak_bytes;
  }
  os << "},\"sum_of_peaks\":" << sum_of_peaks << ",\"overall_peak\":" << overall_peak << "}";
  return os.str();
}

namespace detail {

ThreadAttribution& thread_attribution() {
  thread_local ThreadAttribution attr;
  return attr;
}

void charge_erased(const std::shared_ptr<void>& state, Stage stage, std::int64_t bytes) {
  MemoryLedger::charge_state(*static_cast<MemoryLedger::State*>(state.get()), stage, bytes);
}

}  // namespace detail

LedgerScope::LedgerScope(MemoryLedger& ledger)
    : previous_(detail::thread_attribution().ledger_state) {
  detail::thread_attribution().ledger_state = ledger.state_;
}

LedgerScope::~LedgerScope() { detail::thread_attribution().ledger_state = std::move(previous_); }

StageScope::StageScope(Stage stage) : previous_(detail::thread_attribution().stage) {
  detail::thread_attribution().stage = stage;
}

StageScope::~StageScope() { detail::thread_attribution().stage = previous_; }

ChargeToken::ChargeToken(std::int64_t bytes)
    : state_(detail::thread_attribution().ledger_state),
      stage_(detail::thread_attribution().stage),
      bytes_(bytes) {
  if (state_) detail::charge_erased(state_, stage_, bytes_);
}

ChargeToken::~ChargeToken() {
  if (state_) detail::charge_erased(state_, stage_, -bytes_);
}

}  // namespace holotile::metrics
