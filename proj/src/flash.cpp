#include "racksim/flash.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace racksim {

DeviceProfile DeviceProfile::by_name(const std::string& n) {
  if (n == "p-ssd") return pssd();
  if (n == "intel-dc") return intel_dc();
  if (n == "optane") return optane();
  throw std::invalid_argument("unknown device profile: " + n);
}

void SsdGeometry::validate() const {
  if (channels < 1 || chips_per_channel < 1 || blocks_per_chip < 1 ||
      pages_per_block < 1 || page_size < 1)
    throw std::invalid_argument("ssd geometry counts must be >= 1");
  if (!profile.gc_free()) {
    if (!(profile.block_erase > profile.page_program &&
          profile.page_program > profile.page_read))
      throw std::invalid_argument(
          "device latencies must order erase > program > read");
  }
}

// ---------------------------------------------------------------- Channel --

void Channel::start_host_op(Engine& eng, SimTime dur, std::function<void()> done) {
  assert(accepts_host());
  run_op(eng, FlashOp{dur, std::move(done)});
}

void Channel::submit_gc_batch(Engine& eng, std::vector<FlashOp> ops,
                              std::function<void()> batch_done) {
  pending_batches_.push_back(Batch{std::move(ops), std::move(batch_done)});
  if (!busy_) try_start_next(eng);
}

void Channel::push_bg_op(Engine& eng, SimTime dur, std::function<void()> done) {
  bg_ops_.push_back(FlashOp{dur, std::move(done)});
  if (!busy_) try_start_next(eng);
}

void Channel::run_op(Engine& eng, FlashOp op) {
  busy_ = true;
  current_done_ = std::move(op.done);
  eng.schedule(op.dur, EventKind::kOpComplete, [this, &eng] { on_op_done(eng); });
}

void Channel::on_op_done(Engine& eng) {
  busy_ = false;
  auto done = std::move(current_done_);
  current_done_ = nullptr;
  if (done) done();
  if (busy_) return;  // completion callback started a new op

  if (in_batch_) {
    if (!batch_ops_.empty()) {
      FlashOp next = std::move(batch_ops_.front());
      batch_ops_.pop_front();
      run_op(eng, std::move(next));
      return;
    }
    in_batch_ = false;
    auto bd = std::move(batch_done_);
    batch_done_ = nullptr;
    if (bd) bd();
    if (busy_) return;
  }
  try_start_next(eng);
}

void Channel::try_start_next(Engine& eng) {
  assert(!busy_);
  if (in_batch_) {
    if (!batch_ops_.empty()) {
      FlashOp next = std::move(batch_ops_.front());
      batch_ops_.pop_front();
      run_op(eng, std::move(next));
    }
    return;
  }
  // host first: give the scheduler one shot at the idle channel
  if (on_host_ready) {
    on_host_ready();
    if (busy_) return;
  }
  if (!pending_batches_.empty()) {
    Batch b = std::move(pending_batches_.front());
    pending_batches_.pop_front();
    in_batch_ = true;
    batch_ops_.assign(std::make_move_iterator(b.ops.begin()),
                      std::make_move_iterator(b.ops.end()));
    batch_done_ = std::move(b.done);
    if (!batch_ops_.empty()) {
      FlashOp next = std::move(batch_ops_.front());
      batch_ops_.pop_front();
      run_op(eng, std::move(next));
    } else {
      in_batch_ = false;
      if (batch_done_) {
        auto bd = std::move(batch_done_);
        batch_done_ = nullptr;
        bd();
      }
    }
    return;
  }
  if (!bg_ops_.empty()) {
    FlashOp next = std::move(bg_ops_.front());
    bg_ops_.pop_front();
    run_op(eng, std::move(next));
  }
}

// -------------------------------------------------------------------- Ssd --

Ssd::Ssd(const SsdGeometry& g) : geom(g) {
  geom.validate();
  blocks.resize(geom.blocks_per_ssd());
  page_lpa.assign(size_t(geom.blocks_per_ssd()) * geom.pages_per_block, kUnmapped);
  chans.resize(geom.channels);
}

// ---------------------------------------------------------- ServerStorage --

ServerStorage::ServerStorage(Engine& eng, const FlashConfig& cfg)
    : eng_(eng), cfg_(cfg) {
  cfg_.geometry.validate();
  for (int i = 0; i < cfg_.ssds_per_server; i++) ssds_.emplace_back(cfg_.geometry);
}

Vssd& ServerStorage::create_vssd(uint32_t id, int ssd_index, Isolation iso,
                                 const std::vector<int>& units,
                                 int64_t capacity_bytes) {
  if (vssds_.count(id)) throw std::invalid_argument("duplicate vssd id");
  if (ssd_index < 0 || ssd_index >= int(ssds_.size()))
    throw std::invalid_argument("bad ssd index");
  Ssd& dev = ssds_[ssd_index];
  const SsdGeometry& g = dev.geom;

  std::vector<int> chips;
  if (iso == Isolation::kHardware) {
    for (int ch : units) {
      if (ch < 0 || ch >= g.channels) throw std::invalid_argument("bad channel id");
      for (int c = 0; c < g.chips_per_channel; c++)
        chips.push_back(ch * g.chips_per_channel + c);
    }
  } else {
    chips = units;
    for (int c : chips)
      if (c < 0 || c >= g.channels * g.chips_per_channel)
        throw std::invalid_argument("bad chip id");
  }
  std::sort(chips.begin(), chips.end());
  if (std::adjacent_find(chips.begin(), chips.end()) != chips.end())
    throw std::invalid_argument("duplicate units in vssd request");

  // Conflict check against every vssd already on this ssd. A hardware
  // vssd owns every chip of its channels, so chip overlap covers both the
  // chip-vs-chip and the channel-vs-anything cases.
  for (const auto& [oid, ov] : vssds_) {
    if (ov.ssd_index != ssd_index) continue;
    for (int c : chips)
      if (std::binary_search(ov.chips.begin(), ov.chips.end(), c))
        throw std::invalid_argument("vssd resource conflict with vssd " +
                                    std::to_string(oid));
  }

  int64_t slice_bytes = int64_t(chips.size()) * g.blocks_per_chip * g.block_bytes();
  if (capacity_bytes > slice_bytes)
    throw std::invalid_argument("vssd capacity exceeds its flash slice");

  Vssd v;
  v.id = id;
  v.isolation = iso;
  v.ssd_index = ssd_index;
  v.chips = chips;
  for (int c : chips) {
    int ch = c / g.chips_per_channel;
    if (v.channels.empty() || v.channels.back() != ch) v.channels.push_back(ch);
  }
  v.capacity_bytes = capacity_bytes;
  v.capacity_pages = uint32_t(capacity_bytes / g.page_size);
  v.mapping.assign(v.capacity_pages, kUnmapped);
  v.free_lists.resize(v.channels.size());
  v.open_blocks.assign(v.channels.size(), kUnmapped);
  v.cache.capacity = cfg_.cache_bytes_per_vssd;
  for (int c : chips) {
    int ch = c / g.chips_per_channel;
    int slot = channel_slot(v, ch);
    for (int b = 0; b < g.blocks_per_chip; b++) {
      uint32_t bid = uint32_t(c) * g.blocks_per_chip + b;
      dev.blocks[bid].owner = id;
      v.free_lists[slot].push_back(bid);
    }
  }
  for (auto& fl : v.free_lists) std::sort(fl.begin(), fl.end(), std::greater<>());
  v.owned_blocks = uint32_t(chips.size()) * g.blocks_per_chip;
  v.free_count = v.owned_blocks;
  return vssds_.emplace(id, std::move(v)).first->second;
}

void ServerStorage::destroy_vssd(uint32_t id) {
  Vssd& v = vssd(id);
  assert(!v.gc_active);
  Ssd& dev = ssds_[v.ssd_index];
  for (int c : v.chips) {
    for (int b = 0; b < dev.geom.blocks_per_chip; b++) {
      uint32_t bid = uint32_t(c) * dev.geom.blocks_per_chip + b;
      Block& blk = dev.blocks[bid];
      blk.owner = kNoVssd;
      blk.state = Block::State::kFree;
      blk.valid = 0;
      blk.frontier = 0;
      uint64_t base = uint64_t(bid) * dev.geom.pages_per_block;
      std::fill_n(dev.page_lpa.begin() + base, dev.geom.pages_per_block, kUnmapped);
    }
  }
  vssds_.erase(id);
}

int ServerStorage::make_channel_group(int ssd_index,
                                      const std::vector<uint32_t>& members) {
  // software-isolated members of a group must span the same channel set
  const std::vector<int>* ref = nullptr;
  for (uint32_t m : members) {
    Vssd& v = vssd(m);
    if (v.isolation != Isolation::kSoftware)
      throw std::invalid_argument("channel groups hold software-isolated vssds");
    if (!ref) ref = &v.channels;
    else if (*ref != v.channels)
      throw std::invalid_argument("group members must span the same channels");
  }
  ChannelGroup gr;
  gr.id = int(groups_.size());
  gr.ssd_index = ssd_index;
  gr.members = members;
  for (uint32_t m : members) vssd(m).channel_group = gr.id;
  groups_.push_back(std::move(gr));
  return groups_.back().id;
}

int ServerStorage::channel_slot(const Vssd& v, int channel) const {
  for (size_t i = 0; i < v.channels.size(); i++)
    if (v.channels[i] == channel) return int(i);
  return -1;
}

void ServerStorage::invalidate(Vssd& v, uint32_t ppa) {
  Ssd& dev = ssds_[v.ssd_index];
  uint32_t bid = ppa / dev.geom.pages_per_block;
  Block& b = dev.blocks[bid];
  assert(b.valid > 0);
  b.valid--;
  dev.page_lpa[ppa] = kUnmapped;
}

uint32_t ServerStorage::allocate_page(Vssd& v, int prefer_slot) {
  Ssd& dev = ssds_[v.ssd_index];
  int n = int(v.channels.size());
  for (int k = 0; k < n; k++) {
    int slot = prefer_slot >= 0 ? (prefer_slot + k) % n
                                : (v.alloc_cursor + k) % n;
    uint32_t bid = v.open_blocks[slot];
    if (bid == kUnmapped || dev.blocks[bid].frontier >= dev.geom.pages_per_block) {
      if (v.free_lists[slot].empty()) continue;
      bid = v.free_lists[slot].back();
      v.free_lists[slot].pop_back();
      v.open_blocks[slot] = bid;
      Block& nb = dev.blocks[bid];
      nb.state = Block::State::kOpen;
      v.free_count--;
    }
    Block& b = dev.blocks[bid];
    uint32_t ppa = bid * dev.geom.pages_per_block + b.frontier;
    b.frontier++;
    if (b.frontier >= dev.geom.pages_per_block) {
      b.state = Block::State::kFull;
      v.open_blocks[slot] = kUnmapped;
    }
    if (prefer_slot < 0) v.alloc_cursor = (slot + 1) % n;
    return ppa;
  }
  return kUnmapped;
}

uint32_t ServerStorage::apply_write_page(Vssd& v, uint32_t lpa, int prefer_slot) {
  Ssd& dev = ssds_[v.ssd_index];
  if (dev.geom.profile.gc_free()) {
    // erase-free device: fixed in-place layout, no free-block accounting
    if (v.mapping[lpa] == kUnmapped) {
      uint32_t rel_block = lpa / dev.geom.pages_per_block;
      int chip = v.chips[rel_block / dev.geom.blocks_per_chip];
      uint32_t bid = uint32_t(chip) * dev.geom.blocks_per_chip +
                     rel_block % dev.geom.blocks_per_chip;
      v.mapping[lpa] = bid * dev.geom.pages_per_block + lpa % dev.geom.pages_per_block;
      dev.page_lpa[v.mapping[lpa]] = lpa;
      dev.blocks[bid].valid++;
    }
    v.pages_written++;
    return v.mapping[lpa];
  }
  uint32_t ppa = allocate_page(v, prefer_slot);
  if (ppa == kUnmapped) return kUnmapped;
  if (v.mapping[lpa] != kUnmapped) invalidate(v, v.mapping[lpa]);
  v.mapping[lpa] = ppa;
  dev.page_lpa[ppa] = lpa;
  dev.blocks[ppa / dev.geom.pages_per_block].valid++;
  v.pages_written++;
  return ppa;
}

ServerStorage::WriteResult ServerStorage::begin_write(uint32_t vssd_id,
                                                      uint64_t lba, uint32_t len,
                                                      int prefer_slot) {
  Vssd& v = vssd(vssd_id);
  const SsdGeometry& g = ssds_[v.ssd_index].geom;
  if (lba + len > uint64_t(v.capacity_bytes))
    throw std::invalid_argument("write beyond vssd capacity");
  uint32_t first = uint32_t(lba / g.page_size);
  uint32_t pages = uint32_t((lba % g.page_size + len + g.page_size - 1) / g.page_size);

  WriteResult r;
  if (v.gc_active && !g.profile.gc_free()) {
    int64_t bytes = int64_t(pages) * g.page_size;
    if (v.cache.occupancy + bytes > v.cache.capacity) {
      r.stalled = true;
      v.cache_stalled_writes++;
      return r;
    }
    v.cache.occupancy += bytes;
    for (uint32_t i = 0; i < pages; i++) {
      v.cache.pending.emplace_back(first + i, g.page_size);
      v.cache.dirty[first + i]++;
    }
    v.cache_absorbed_writes++;
    if (double(v.cache.occupancy) > cfg_.cache_flush_watermark * double(v.cache.capacity))
      start_cache_flush(vssd_id);
    r.cached = true;
    return r;
  }

  // flash path: check space up front so multi-page writes never half-apply
  if (!g.profile.gc_free()) {
    uint64_t avail = uint64_t(v.free_count) * g.pages_per_block;
    for (size_t s = 0; s < v.open_blocks.size(); s++) {
      uint32_t ob = v.open_blocks[s];
      if (ob != kUnmapped)
        avail += g.pages_per_block - ssds_[v.ssd_index].blocks[ob].frontier;
    }
    if (avail < pages) {
      r.stalled = true;
      v.cache_stalled_writes++;
      return r;
    }
  }

  int slot = prefer_slot >= 0 ? prefer_slot : v.alloc_cursor;
  uint32_t ppa0 = kUnmapped;
  for (uint32_t i = 0; i < pages; i++) {
    uint32_t ppa = apply_write_page(v, first + i, slot);
    assert(ppa != kUnmapped);
    if (i == 0) {
      ppa0 = ppa;
      slot = channel_slot(v, g.channel_of_block(ppa0 / g.pages_per_block));
    }
  }
  v.alloc_cursor = (slot + 1) % int(v.channels.size());
  r.target_channel = g.channel_of_block(ppa0 / g.pages_per_block);
  r.service = SimTime(pages) * g.profile.page_program;
  return r;
}

ServerStorage::ReadPlan ServerStorage::plan_read(uint32_t vssd_id, uint64_t lba,
                                                 uint32_t len) const {
  const Vssd& v = vssd(vssd_id);
  const SsdGeometry& g = ssds_[v.ssd_index].geom;
  if (lba + len > uint64_t(v.capacity_bytes))
    throw std::invalid_argument("read beyond vssd capacity");
  uint32_t first = uint32_t(lba / g.page_size);
  uint32_t pages = uint32_t((lba % g.page_size + len + g.page_size - 1) / g.page_size);

  ReadPlan p;
  if (v.cache.contains(first)) {
    p.from_cache = true;
    p.service = cfg_.cache_latency;
    return p;
  }
  if (v.mapping[first] == kUnmapped) {
    // never-written page: zero-fill at nominal read latency, no channel use
    p.unmapped = true;
    p.service = SimTime(pages) * g.profile.page_read;
    return p;
  }
  p.target_channel = g.channel_of_block(v.mapping[first] / g.pages_per_block);
  p.service = SimTime(pages) * g.profile.page_read;
  return p;
}

double ServerStorage::free_block_ratio(uint32_t vssd_id) const {
  return vssd(vssd_id).free_ratio();
}

int ServerStorage::static_write_channel(uint32_t vssd_id, uint64_t lba) const {
  const Vssd& v = vssd(vssd_id);
  const SsdGeometry& g = ssds_[v.ssd_index].geom;
  if (!g.profile.gc_free()) return -1;
  uint32_t lpa = uint32_t(lba / g.page_size);
  uint32_t rel_block = lpa / g.pages_per_block;
  int chip = v.chips[rel_block / g.blocks_per_chip];
  return chip / g.chips_per_channel;
}

int ServerStorage::writable_slot(uint32_t vssd_id, uint32_t pages) const {
  const Vssd& v = vssd(vssd_id);
  const Ssd& dev = ssds_[v.ssd_index];
  const SsdGeometry& g = dev.geom;
  int n = int(v.channels.size());
  for (int k = 0; k < n; k++) {
    int slot = (v.alloc_cursor + k) % n;
    if (!dev.chans[v.channels[slot]].accepts_host()) continue;
    uint64_t avail = uint64_t(v.free_lists[slot].size()) * g.pages_per_block;
    uint32_t ob = v.open_blocks[slot];
    if (ob != kUnmapped) avail += g.pages_per_block - dev.blocks[ob].frontier;
    if (avail >= pages) return slot;
  }
  return -1;
}

double ServerStorage::group_free_ratio(int group_id) const {
  const ChannelGroup& gr = groups_[group_id];
  uint64_t free = 0, total = 0;
  for (uint32_t m : gr.members) {
    const Vssd& v = vssd(m);
    free += v.free_count;
    total += v.total_blocks();
  }
  return total == 0 ? 0.0 : double(free) / double(total);
}

// --------------------------------------------------------------------- GC --

std::optional<uint32_t> ServerStorage::pick_victim(const Vssd& v) const {
  const Ssd& dev = ssds_[v.ssd_index];
  const SsdGeometry& g = dev.geom;
  uint32_t best = kUnmapped;
  uint16_t best_valid = uint16_t(g.pages_per_block);
  for (int c : v.chips) {
    for (int b = 0; b < g.blocks_per_chip; b++) {
      uint32_t bid = uint32_t(c) * g.blocks_per_chip + b;
      const Block& blk = dev.blocks[bid];
      if (blk.owner != v.id || blk.state != Block::State::kFull) continue;
      if (blk.valid < best_valid) {
        best_valid = blk.valid;
        best = bid;
      }
    }
  }
  // borrowed blocks live on foreign chips
  for (const auto& bg : v.borrowed) {
    for (uint32_t bid : bg.block_ids) {
      const Block& blk = dev.blocks[bid];
      if (blk.owner != v.id || blk.state != Block::State::kFull) continue;
      if (blk.valid < best_valid) {
        best_valid = blk.valid;
        best = bid;
      }
    }
  }
  if (best == kUnmapped) return std::nullopt;
  // a fully-valid victim frees nothing; treat as no erasable block
  if (best_valid >= g.pages_per_block) return std::nullopt;
  return best;
}

void ServerStorage::run_gc(uint32_t vssd_id, GcCode kind,
                           std::function<void(const GcEpisode&)> on_done) {
  Vssd& v = vssd(vssd_id);
  assert(!v.gc_active);
  if (ssds_[v.ssd_index].geom.profile.gc_free()) {
    GcEpisode ep{vssd_id, kind, kind, eng_.now(), eng_.now(), 0, 0, 0, false};
    gc_log_.push_back(ep);
    if (on_done) on_done(ep);
    return;
  }
  v.gc_active = true;
  v.gc_started = eng_.now();
  v.gc_kind = kind;
  if (on_gc_begin) on_gc_begin(vssd_id);
  auto run = std::make_shared<GcRun>();
  run->vssd_id = vssd_id;
  run->kind = kind;
  run->stop_ratio = cfg_.soft_threshold + cfg_.gc_restore_margin;
  run->on_done = std::move(on_done);
  run->ep = GcEpisode{vssd_id, kind, kind, eng_.now(), 0, 0, 0, 0, false};
  gc_step(run);
}

void ServerStorage::run_group_gc(int group_id, GcCode kind,
                                 std::function<void(const GcEpisode&)> on_member_done) {
  // every member enters GC in this same event step
  ChannelGroup& gr = groups_[group_id];
  for (uint32_t m : gr.members) run_gc(m, kind, on_member_done);
}

void ServerStorage::gc_step(std::shared_ptr<GcRun> run) {
  Vssd& v = vssd(run->vssd_id);
  Ssd& dev = ssds_[v.ssd_index];
  const SsdGeometry& g = dev.geom;

  if (v.free_ratio() >= run->stop_ratio) {
    finish_gc(run);
    return;
  }
  auto vic = pick_victim(v);
  if (!vic) {
    run->ep.out_of_space = v.free_ratio() < cfg_.soft_threshold;
    finish_gc(run);
    return;
  }
  uint32_t victim = *vic;
  int ch = g.channel_of_block(victim);
  int slot = channel_slot(v, ch);

  // snapshot live pages and reserve their landing spots now, so concurrent
  // host writes can never strand a migration
  struct Move {
    uint32_t src, dst, lpa;
  };
  auto moves = std::make_shared<std::vector<Move>>();
  uint64_t base = uint64_t(victim) * g.pages_per_block;
  for (int pg = 0; pg < g.pages_per_block; pg++) {
    uint32_t lpa = dev.page_lpa[base + pg];
    if (lpa == kUnmapped) continue;
    uint32_t dst = allocate_page(v, slot);
    if (dst == kUnmapped) dst = allocate_page(v);  // spill to any owned channel
    if (dst == kUnmapped) {
      run->ep.out_of_space = true;
      finish_gc(run);
      return;
    }
    moves->push_back(Move{uint32_t(base + pg), dst, lpa});
  }

  std::vector<FlashOp> ops;
  ops.reserve(moves->size() * 2 + 1);
  for (size_t i = 0; i < moves->size(); i++)
    ops.push_back(FlashOp{g.profile.page_read, nullptr});
  for (size_t i = 0; i < moves->size(); i++)
    ops.push_back(FlashOp{g.profile.page_program, nullptr});
  ops.push_back(FlashOp{g.profile.block_erase, nullptr});

  auto self = this;
  dev.chans[ch].submit_gc_batch(eng_, std::move(ops), [self, run, moves, victim] {
    Vssd& v = self->vssd(run->vssd_id);
    Ssd& dev = self->ssds_[v.ssd_index];
    const SsdGeometry& g = dev.geom;
    Block& vb = dev.blocks[victim];
    for (const auto& m : *moves) {
      if (dev.page_lpa[m.src] != m.lpa) continue;  // superseded mid-batch
      v.mapping[m.lpa] = m.dst;
      dev.page_lpa[m.dst] = m.lpa;
      dev.blocks[m.dst / g.pages_per_block].valid++;
      dev.page_lpa[m.src] = kUnmapped;
      vb.valid--;
      run->ep.pages_migrated++;
    }
    uint64_t base = uint64_t(victim) * g.pages_per_block;
    std::fill_n(dev.page_lpa.begin() + base, g.pages_per_block, kUnmapped);
    vb.valid = 0;
    vb.frontier = 0;
    vb.state = Block::State::kFree;
    vb.erase_count++;
    dev.total_erases++;
    int slot = self->channel_slot(v, g.channel_of_block(victim));
    v.free_lists[slot].push_back(victim);
    v.free_count++;
    run->ep.erases++;
    run->ep.blocks_freed++;
    self->gc_step(run);
  });
}

void ServerStorage::finish_gc(std::shared_ptr<GcRun> run) {
  Vssd& v = vssd(run->vssd_id);
  return_borrowed(v, run->ep);
  v.gc_active = false;
  v.last_gc_end = eng_.now();
  run->ep.end = eng_.now();
  gc_log_.push_back(run->ep);
  start_cache_flush(v.id);
  if (on_space_available) on_space_available();
  if (run->on_done) run->on_done(run->ep);
}

void ServerStorage::return_borrowed(Vssd& v, GcEpisode& ep) {
  if (v.borrowed.empty()) return;
  Ssd& dev = ssds_[v.ssd_index];
  for (auto& bg : v.borrowed) {
    Vssd& lender = vssd(bg.lender);
    for (uint32_t bid : bg.block_ids) {
      Block& b = dev.blocks[bid];
      // security erase for any block the borrower wrote and GC did not reclaim;
      // wear counted, duration folded into the episode end
      if (b.state != Block::State::kFree) {
        uint64_t base = uint64_t(bid) * dev.geom.pages_per_block;
        for (int pg = 0; pg < dev.geom.pages_per_block; pg++) {
          if (dev.page_lpa[base + pg] != kUnmapped) {
            uint32_t lpa = dev.page_lpa[base + pg];
            if (lpa < v.mapping.size() && v.mapping[lpa] == base + pg)
              v.mapping[lpa] = kUnmapped;
            dev.page_lpa[base + pg] = kUnmapped;
          }
        }
        b.valid = 0;
        b.frontier = 0;
        b.state = Block::State::kFree;
        b.erase_count++;
        dev.total_erases++;
        ep.erases++;
        for (size_t s = 0; s < v.open_blocks.size(); s++)
          if (v.open_blocks[s] == bid) v.open_blocks[s] = kUnmapped;
      } else {
        v.free_count--;
      }
      b.owner = bg.lender;
      int slot = channel_slot(lender, dev.geom.channel_of_block(bid));
      lender.free_lists[slot].push_back(bid);
      lender.free_count++;
      lender.lent_out--;
      v.borrowed_in--;
    }
  }
  v.borrowed.clear();
}

bool ServerStorage::borrow_blocks(uint32_t borrower_id) {
  Vssd& borrower = vssd(borrower_id);
  if (borrower.channel_group < 0) return false;
  ChannelGroup& gr = groups_[borrower.channel_group];
  Ssd& dev = ssds_[borrower.ssd_index];
  const SsdGeometry& g = dev.geom;
  uint32_t need = uint32_t(
      std::max<int64_t>(1, cfg_.borrow_group_bytes / g.block_bytes()));

  uint32_t best = kNoVssd;
  int64_t best_spare = -1;
  for (uint32_t m : gr.members) {
    if (m == borrower_id) continue;
    Vssd& cand = vssd(m);
    if (cand.gc_active) continue;
    int64_t reserve = int64_t(cfg_.soft_threshold * double(cand.total_blocks())) + 1;
    int64_t spare = int64_t(cand.free_count) - reserve;
    if (spare >= int64_t(need) && spare > best_spare) {
      best_spare = spare;
      best = m;
    }
  }
  if (best == kNoVssd) return false;

  Vssd& lender = vssd(best);
  BorrowedGroup rec;
  rec.lender = best;
  uint32_t taken = 0;
  for (size_t s = 0; s < lender.free_lists.size() && taken < need; s++) {
    auto& fl = lender.free_lists[s];
    while (!fl.empty() && taken < need) {
      uint32_t bid = fl.back();
      fl.pop_back();
      lender.free_count--;
      lender.lent_out++;
      dev.blocks[bid].owner = borrower_id;
      int bslot = channel_slot(borrower, g.channel_of_block(bid));
      borrower.free_lists[bslot].push_back(bid);
      borrower.free_count++;
      borrower.borrowed_in++;
      rec.block_ids.push_back(bid);
      taken++;
    }
  }
  borrower.borrowed.push_back(std::move(rec));
  return true;
}

// ------------------------------------------------------------ write cache --

void ServerStorage::start_cache_flush(uint32_t vssd_id) {
  Vssd& v = vssd(vssd_id);
  if (v.cache.flushing || v.cache.pending.empty()) return;
  v.cache.flushing = true;
  flush_one(vssd_id);
}

void ServerStorage::flush_one(uint32_t vssd_id) {
  Vssd& v = vssd(vssd_id);
  if (v.cache.pending.empty()) {
    v.cache.flushing = false;
    return;
  }
  auto [lpa, bytes] = v.cache.pending.front();
  v.cache.pending.pop_front();
  Ssd& dev = ssds_[v.ssd_index];
  const SsdGeometry& g = dev.geom;
  uint32_t ppa = apply_write_page(v, lpa);
  if (ppa == kUnmapped) {
    // no landing space mid-GC; GC completion restarts the flush
    v.cache.pending.emplace_front(lpa, bytes);
    v.cache.flushing = false;
    return;
  }
  int ch = g.channel_of_block(ppa / g.pages_per_block);
  dev.chans[ch].push_bg_op(
      eng_, g.profile.page_program, [this, vssd_id, lpa, bytes = bytes]() {
        Vssd& v = vssd(vssd_id);
        v.cache.occupancy -= bytes;
        auto it = v.cache.dirty.find(lpa);
        if (it != v.cache.dirty.end() && --it->second == 0)
          v.cache.dirty.erase(it);
        if (on_space_available) on_space_available();
        flush_one(vssd_id);
      });
}

// ---------------------------------------------------------------- prefill --

void ServerStorage::prefill(uint32_t vssd_id, double used_fraction,
                            double target_free, RngStream& rng) {
  Vssd& v = vssd(vssd_id);
  const SsdGeometry& g = ssds_[v.ssd_index].geom;
  uint32_t used = uint32_t(used_fraction * v.capacity_pages);
  for (uint32_t lpa = 0; lpa < used; lpa++) apply_write_page(v, lpa);
  if (g.profile.gc_free() || used == 0) return;
  while (v.free_ratio() > target_free) {
    uint32_t lpa = uint32_t(rng.next_below(used));
    if (apply_write_page(v, lpa) == kUnmapped) break;
  }
}

Vssd& ServerStorage::vssd(uint32_t id) {
  auto it = vssds_.find(id);
  if (it == vssds_.end())
    throw std::invalid_argument("unknown vssd " + std::to_string(id));
  return it->second;
}

const Vssd& ServerStorage::vssd(uint32_t id) const {
  auto it = vssds_.find(id);
  if (it == vssds_.end())
    throw std::invalid_argument("unknown vssd " + std::to_string(id));
  return it->second;
}

// ------------------------------------------------------- wear / placement --

std::vector<uint32_t> ServerStorage::vssds_on_ssd(int ssd_index) const {
  std::vector<uint32_t> out;
  for (const auto& [id, v] : vssds_)
    if (v.ssd_index == ssd_index) out.push_back(id);
  return out;
}

Vssd ServerStorage::detach_vssd(uint32_t id) {
  Vssd& v = vssd(id);
  assert(!v.gc_active);
  assert(v.channel_group < 0 && v.borrowed.empty() && v.lent_out == 0);
  Ssd& dev = ssds_[v.ssd_index];
  for (int c : v.chips) {
    for (int b = 0; b < dev.geom.blocks_per_chip; b++) {
      uint32_t bid = uint32_t(c) * dev.geom.blocks_per_chip + b;
      Block& blk = dev.blocks[bid];
      blk.owner = kNoVssd;
      blk.state = Block::State::kFree;
      blk.valid = 0;
      blk.frontier = 0;
      uint64_t base = uint64_t(bid) * dev.geom.pages_per_block;
      std::fill_n(dev.page_lpa.begin() + base, dev.geom.pages_per_block, kUnmapped);
    }
  }
  Vssd out = std::move(v);
  vssds_.erase(id);
  out.free_lists.clear();
  out.open_blocks.clear();
  return out;
}

ServerStorage::SwapAccounting ServerStorage::attach_vssd(Vssd v, int ssd_index) {
  Ssd& dev = ssds_[ssd_index];
  const SsdGeometry& g = dev.geom;
  for (const auto& [oid, ov] : vssds_) {
    if (ov.ssd_index != ssd_index) continue;
    for (int c : v.chips)
      if (std::binary_search(ov.chips.begin(), ov.chips.end(), c))
        throw std::invalid_argument("swap target chips busy");
  }
  std::vector<uint32_t> live;
  for (uint32_t lpa = 0; lpa < v.capacity_pages; lpa++)
    if (v.mapping[lpa] != kUnmapped) live.push_back(lpa);

  v.ssd_index = ssd_index;
  v.mapping.assign(v.capacity_pages, kUnmapped);
  v.free_lists.assign(v.channels.size(), {});
  v.open_blocks.assign(v.channels.size(), kUnmapped);
  v.alloc_cursor = 0;
  for (int c : v.chips) {
    int slot = channel_slot(v, c / g.chips_per_channel);
    for (int b = 0; b < g.blocks_per_chip; b++) {
      uint32_t bid = uint32_t(c) * g.blocks_per_chip + b;
      dev.blocks[bid].owner = v.id;
      v.free_lists[slot].push_back(bid);
    }
  }
  for (auto& fl : v.free_lists) std::sort(fl.begin(), fl.end(), std::greater<>());
  v.free_count = v.owned_blocks;

  Vssd& nv = vssds_.emplace(v.id, std::move(v)).first->second;
  SwapAccounting acc;
  for (uint32_t lpa : live) {
    uint32_t before = nv.free_count;
    apply_write_page(nv, lpa);
    if (nv.free_count != before) {
      // a fresh destination block was opened: erase-before-program cost
      dev.blocks[nv.mapping[lpa] / g.pages_per_block].erase_count++;
      dev.total_erases++;
      dev.swap_erases++;
      acc.erases++;
    }
  }
  acc.pages_programmed = live.size();
  acc.bytes_moved = uint64_t(live.size()) * g.page_size;
  return acc;
}

}  // namespace racksim
