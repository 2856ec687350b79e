#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "racksim/engine.hpp"
#include "racksim/packet.hpp"
#include "racksim/sim_time.hpp"

namespace racksim {

constexpr uint32_t kUnmapped = 0xffffffffu;
constexpr uint32_t kNoVssd = 0xffffffffu;

// Device latency profile. block_erase <= 0 marks an erase-free device
// (in-place updates, no GC path).
struct DeviceProfile {
  std::string name = "p-ssd";
  SimTime page_read = usec(70);
  SimTime page_program = usec(600);
  SimTime block_erase = msec(4);

  bool gc_free() const { return block_erase <= 0; }

  static DeviceProfile pssd() { return {"p-ssd", usec(70), usec(600), msec(4)}; }
  static DeviceProfile intel_dc() { return {"intel-dc", usec(90), usec(70), msec(3)}; }
  static DeviceProfile optane() { return {"optane", usec(10), usec(10), -1}; }
  static DeviceProfile by_name(const std::string& n);
};

struct SsdGeometry {
  int channels = 4;
  int chips_per_channel = 4;
  int blocks_per_chip = 64;
  int pages_per_block = 256;
  int page_size = 4096;
  DeviceProfile profile;
  uint32_t block_endurance = 30000;

  int blocks_per_channel() const { return chips_per_channel * blocks_per_chip; }
  int blocks_per_ssd() const { return channels * blocks_per_channel(); }
  int64_t block_bytes() const { return int64_t(pages_per_block) * page_size; }
  int64_t ssd_bytes() const { return int64_t(blocks_per_ssd()) * block_bytes(); }
  int channel_of_block(uint32_t bid) const { return int(bid / blocks_per_channel()); }
  int chip_of_block(uint32_t bid) const { return int(bid / blocks_per_chip); }
  void validate() const;
};

struct Block {
  uint32_t erase_count = 0;
  uint16_t valid = 0;
  uint16_t frontier = 0;  // next unwritten page; == pages_per_block -> closed
  uint32_t owner = kNoVssd;
  enum class State : uint8_t { kFree, kOpen, kFull } state = State::kFree;
};

struct FlashOp {
  SimTime dur = 0;
  std::function<void()> done;  // may be empty
};

// One flash channel: a single-op server with three service classes.
// Host ops are pushed by the I/O scheduler (one in flight, scheduler-gated).
// GC victim batches run back-to-back and exclusively; queued host work drains
// between batches. Background ops (cache flush, swap traffic) run only when
// nothing else wants the channel.
class Channel {
 public:
  bool accepts_host() const { return !busy_ && !in_batch_; }
  bool gc_busy() const { return in_batch_ || !pending_batches_.empty(); }
  bool busy() const { return busy_; }

  void start_host_op(Engine& eng, SimTime dur, std::function<void()> done);
  void submit_gc_batch(Engine& eng, std::vector<FlashOp> ops,
                       std::function<void()> batch_done);
  void push_bg_op(Engine& eng, SimTime dur, std::function<void()> done);

  // Invoked whenever the channel becomes available for a host op; the
  // scheduler may synchronously push one.
  std::function<void()> on_host_ready;

 private:
  void run_op(Engine& eng, FlashOp op);
  void on_op_done(Engine& eng);
  void try_start_next(Engine& eng);

  bool busy_ = false;
  bool in_batch_ = false;
  std::deque<FlashOp> batch_ops_;
  std::function<void()> batch_done_;
  struct Batch {
    std::vector<FlashOp> ops;
    std::function<void()> done;
  };
  std::deque<Batch> pending_batches_;
  std::deque<FlashOp> bg_ops_;
  std::function<void()> current_done_;
};

struct Ssd {
  SsdGeometry geom;
  std::vector<Block> blocks;
  std::vector<uint32_t> page_lpa;  // per physical page: owner's logical page
  std::vector<Channel> chans;
  uint64_t total_erases = 0;
  uint64_t swap_erases = 0;  // wear added by balancing traffic

  explicit Ssd(const SsdGeometry& g);
  double avg_erase_count() const {
    return double(total_erases) / double(blocks.size());
  }
};

struct BorrowedGroup {
  uint32_t lender;
  std::vector<uint32_t> block_ids;
};

struct WriteCache {
  int64_t capacity = 64ll * 1024 * 1024;
  int64_t occupancy = 0;
  // pending flush queue: (lpa, bytes); lookup set for read-your-writes
  std::deque<std::pair<uint32_t, uint32_t>> pending;
  std::map<uint32_t, int> dirty;  // lpa -> pending count
  bool flushing = false;

  bool contains(uint32_t lpa) const { return dirty.count(lpa) > 0; }
};

enum class Isolation { kHardware, kSoftware };

struct Vssd {
  uint32_t id = 0;
  Isolation isolation = Isolation::kHardware;
  int ssd_index = 0;
  std::vector<int> channels;  // hw: owned channels; sw: channels spanned by its chips
  std::vector<int> chips;     // sw only (global chip ids within the ssd)
  int channel_group = -1;
  int64_t capacity_bytes = 0;
  uint32_t capacity_pages = 0;

  std::vector<uint32_t> mapping;  // lpa -> ppa within its ssd
  // free lists per owned channel (parallel to `channels`)
  std::vector<std::vector<uint32_t>> free_lists;
  std::vector<uint32_t> open_blocks;  // per owned channel, kUnmapped if none
  uint32_t owned_blocks = 0;          // fixed allocation at creation
  uint32_t free_count = 0;            // free blocks currently held (incl. borrowed)
  uint32_t borrowed_in = 0;
  uint32_t lent_out = 0;
  std::vector<BorrowedGroup> borrowed;
  int alloc_cursor = 0;

  bool gc_active = false;
  SimTime gc_started = 0;
  SimTime last_gc_end = -1;
  GcCode gc_kind = GcCode::kSoft;

  WriteCache cache;

  // stats
  uint64_t pages_written = 0;
  uint64_t cache_absorbed_writes = 0;
  uint64_t cache_stalled_writes = 0;

  uint32_t total_blocks() const { return owned_blocks + borrowed_in - lent_out; }
  double free_ratio() const {
    return total_blocks() == 0 ? 0.0 : double(free_count) / double(total_blocks());
  }
};

struct ChannelGroup {
  int id = 0;
  int ssd_index = 0;
  std::vector<uint32_t> members;
  bool gc_pending = false;  // request outstanding or running
  double free_ratio_sum_cache = 0;
};

struct GcEpisode {
  uint32_t vssd_id;
  GcCode trigger;       // soft / regular / bg
  GcCode grant;         // accept kind actually used (soft grants show as soft)
  SimTime start = 0;
  SimTime end = 0;
  uint32_t blocks_freed = 0;
  uint32_t pages_migrated = 0;
  uint32_t erases = 0;
  bool out_of_space = false;
};

struct FlashConfig {
  SsdGeometry geometry;
  int ssds_per_server = 4;
  int64_t cache_bytes_per_vssd = 64ll * 1024 * 1024;
  double cache_flush_watermark = 0.80;
  SimTime cache_latency = usec(5);
  double gc_restore_margin = 0.10;  // GC stops at soft_threshold + margin
  double soft_threshold = 0.35;
  int64_t borrow_group_bytes = 1ll << 30;
};

// Per-server flash state: SSDs, vSSDs, channel groups, GC mechanics.
class ServerStorage {
 public:
  ServerStorage(Engine& eng, const FlashConfig& cfg);

  // -- provisioning ---------------------------------------------------------
  Vssd& create_vssd(uint32_t id, int ssd_index, Isolation iso,
                    const std::vector<int>& units, int64_t capacity_bytes);
  void destroy_vssd(uint32_t id);
  int make_channel_group(int ssd_index, const std::vector<uint32_t>& members);

  // -- data path ------------------------------------------------------------
  struct WriteResult {
    bool cached = false;     // absorbed by the DRAM write cache
    bool stalled = false;    // cache full; completion deferred until flush
    int target_channel = -1; // flash path: channel carrying the program op
    SimTime service = 0;     // flash path: program time (all pages)
  };
  // Prepares a write. Flash-path state mutation (mapping, frontier) happens
  // here; the caller runs the returned service time as a host op.
  // prefer_slot pins the allocation channel (callers pick one that currently
  // accepts host ops).
  WriteResult begin_write(uint32_t vssd_id, uint64_t lba, uint32_t len,
                          int prefer_slot = -1);

  struct ReadPlan {
    bool from_cache = false;
    bool unmapped = false;
    int target_channel = -1;
    SimTime service = 0;
  };
  ReadPlan plan_read(uint32_t vssd_id, uint64_t lba, uint32_t len) const;

  // Fires whenever space frees up (flush progress, GC completion) so stalled
  // writes can retry.
  std::function<void()> on_space_available;
  // Fires right after a vSSD enters GC (gc_active already set); the server
  // diverts its queued writes to the cache here.
  std::function<void(uint32_t)> on_gc_begin;

  // First allocation slot whose channel currently accepts a host op and has
  // room for `pages` more pages; -1 if none.
  int writable_slot(uint32_t vssd_id, uint32_t pages) const;

  // Erase-free devices place pages statically; the write channel follows the
  // lba instead of the allocator. -1 for normal devices.
  int static_write_channel(uint32_t vssd_id, uint64_t lba) const;

  // -- GC -------------------------------------------------------------------
  // Starts a GC episode for one vSSD. on_done fires at episode end with the
  // completed record (also appended to the episode log).
  void run_gc(uint32_t vssd_id, GcCode kind,
              std::function<void(const GcEpisode&)> on_done);
  void run_group_gc(int group_id, GcCode kind,
                    std::function<void(const GcEpisode&)> on_member_done);

  double free_block_ratio(uint32_t vssd_id) const;
  double group_free_ratio(int group_id) const;

  // Moves ~borrow_group_bytes of free blocks from a collocated group member
  // to `borrower`. Returns false if no member has that much spare.
  bool borrow_blocks(uint32_t borrower_id);

  // -- wear / placement -----------------------------------------------------
  struct SwapAccounting {
    uint64_t bytes_moved = 0;
    uint64_t pages_programmed = 0;
    uint64_t erases = 0;
  };
  std::vector<uint32_t> vssds_on_ssd(int ssd_index) const;
  // Releases a vSSD's flash and hands back its logical state (mapping keys =
  // live pages). attach_vssd claims the same chip positions on the target SSD
  // and replays the live pages; the erase-before-program cost lands in the
  // returned accounting and in the target SSD's swap_erases.
  Vssd detach_vssd(uint32_t id);
  SwapAccounting attach_vssd(Vssd v, int ssd_index);

  // -- accessors ------------------------------------------------------------
  Vssd& vssd(uint32_t id);
  const Vssd& vssd(uint32_t id) const;
  bool has_vssd(uint32_t id) const { return vssds_.count(id) > 0; }
  Ssd& ssd(int i) { return ssds_[i]; }
  const Ssd& ssd(int i) const { return ssds_[i]; }
  int ssd_count() const { return int(ssds_.size()); }
  Channel& channel(int ssd_index, int ch) { return ssds_[ssd_index].chans[ch]; }
  ChannelGroup& group(int id) { return groups_[id]; }
  const std::vector<GcEpisode>& gc_log() const { return gc_log_; }
  std::vector<GcEpisode>& gc_log() { return gc_log_; }
  const FlashConfig& config() const { return cfg_; }
  const std::map<uint32_t, Vssd>& vssds() const { return vssds_; }

  // Deterministic state construction without event traffic: fills `used`
  // logical pages sequentially, then overwrites via the given rng stream
  // until the free ratio reaches `target_free`.
  void prefill(uint32_t vssd_id, double used_fraction, double target_free,
               RngStream& rng);

  // Direct page write used by prefill, flush finalization and swap replay
  // (state only, no latency). Returns the new ppa or kUnmapped if the vSSD
  // is out of free space.
  uint32_t apply_write_page(Vssd& v, uint32_t lpa, int prefer_slot = -1);

  // cache flush machinery (public so GC end and tests can kick it)
  void start_cache_flush(uint32_t vssd_id);

 private:
  struct GcRun {
    uint32_t vssd_id;
    GcCode kind;
    double stop_ratio;
    std::function<void(const GcEpisode&)> on_done;
    GcEpisode ep;
  };

  uint32_t allocate_page(Vssd& v, int prefer_channel_slot = -1);
  std::optional<uint32_t> pick_victim(const Vssd& v) const;
  void gc_step(std::shared_ptr<GcRun> run);
  void finish_gc(std::shared_ptr<GcRun> run);
  void invalidate(Vssd& v, uint32_t ppa);
  void return_borrowed(Vssd& v, GcEpisode& ep);
  void flush_one(uint32_t vssd_id);
  int channel_slot(const Vssd& v, int channel) const;

  Engine& eng_;
  FlashConfig cfg_;
  std::vector<Ssd> ssds_;
  std::map<uint32_t, Vssd> vssds_;
  std::vector<ChannelGroup> groups_;
  std::vector<GcEpisode> gc_log_;
};

}  // namespace racksim
