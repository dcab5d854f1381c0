#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "trackbridge/types.hpp"

namespace trackbridge {

// Fixed-width spot record. The record index is the spot id.
struct SpotRecord {
  std::array<double, 3> position{};
  SymMat3 covariance{};
  std::int32_t timepoint = 0;
  LinkId first_incoming = kNil;
  LinkId first_outgoing = kNil;
  TagRef tag = kNoTag;
  bool alive = false;

  Vec3 pos() const { return {position[0], position[1], position[2]}; }
};

// Fixed-width link record. next_source_link chains links sharing a source
// (split), next_target_link chains links sharing a target (merge).
struct LinkRecord {
  SpotId source = kNil;
  SpotId target = kNil;
  LinkId next_source_link = kNil;
  LinkId next_target_link = kNil;
  bool alive = false;
};

struct TagSet {
  std::string name;
  Rgba color;
};

// One primitive mutation, stored with enough state to invert it.
struct EditOp {
  enum class Kind : std::uint8_t { AddSpot, RemoveSpot, MoveSpot, AddLink, RemoveLink, SetTag };
  Kind kind = Kind::AddSpot;
  std::int32_t id = kNil;
  std::int32_t timepoint = 0;
  std::array<double, 3> position{};
  std::array<double, 3> previous_position{};
  SymMat3 covariance{};
  TagRef tag = kNoTag;
  TagRef previous_tag = kNoTag;
  SpotId source = kNil;
  SpotId target = kNil;
};

using EditBatch = std::vector<EditOp>;

// Undo/redo stacks of edit batches. Owned by LineageGraph.
class UndoRecorder {
 public:
  bool can_undo() const { return !undo_stack_.empty(); }
  bool can_redo() const { return !redo_stack_.empty(); }
  std::size_t undo_depth() const { return undo_stack_.size(); }
  std::size_t redo_depth() const { return redo_stack_.size(); }

 private:
  friend class LineageGraph;
  std::vector<EditBatch> undo_stack_;
  std::vector<EditBatch> redo_stack_;
};

class LineageGraph {
 public:
  static constexpr std::int32_t kUnboundedTimepoints = std::numeric_limits<std::int32_t>::max();

  explicit LineageGraph(std::int32_t timepoint_count = kUnboundedTimepoints);

  std::int32_t timepoint_count() const { return timepoint_count_; }

  // --- editing (each call is one undo batch unless a batch is open) ---
  SpotId add_spot(std::int32_t timepoint, const Vec3& position, const SymMat3& covariance = {});
  SpotId add_spot(std::int32_t timepoint, const Vec3& position, const Mat3& covariance);
  void delete_spot(SpotId id);
  void move_spot(SpotId id, const Vec3& position);
  LinkId add_link(SpotId source, SpotId target);
  void delete_link(LinkId id);
  void set_tag(SpotId id, std::string_view tag_name);
  void clear_tag(SpotId id);

  // Explicit-id insertion, used by undo and by replicas mirroring an engine.
  void insert_spot_at(SpotId id, std::int32_t timepoint, const Vec3& position,
                      const SymMat3& covariance, TagRef tag = kNoTag);
  void insert_link_at(LinkId id, SpotId source, SpotId target);

  // Tag sets are metadata and are not recorded for undo.
  TagRef define_tag(std::string_view name, Rgba color);
  std::optional<TagRef> find_tag(std::string_view name) const;
  const std::vector<TagSet>& tag_sets() const { return tags_; }

  // --- batching and undo ---
  void begin_batch();
  void commit_batch();
  // Reverts the ops recorded since the matching begin_batch and restores the version.
  void abort_batch();
  bool batch_open() const { return !marks_.empty(); }

  bool undo();
  bool redo();
  const UndoRecorder& recorder() const { return recorder_; }
  void clear_history();
  // Merges every undo batch above `depth` into a single batch.
  void coalesce_history(std::size_t depth);

  // --- queries ---
  std::uint64_t version() const { return version_; }
  std::size_t spot_count() const { return alive_spots_; }
  std::size_t link_count() const { return alive_links_; }
  std::size_t spot_slots() const { return spots_.size(); }
  std::size_t link_slots() const { return links_.size(); }

  bool is_spot_alive(SpotId id) const;
  bool is_link_alive(LinkId id) const;
  const SpotRecord& spot(SpotId id) const;
  const LinkRecord& link(LinkId id) const;
  std::string tag_name(SpotId id) const;

  std::vector<SpotId> spots_at_timepoint(std::int32_t t) const;
  std::vector<SpotId> alive_spots() const;
  std::vector<LinkId> alive_links() const;
  std::vector<LinkId> outgoing_links(SpotId id) const;
  std::vector<LinkId> incoming_links(SpotId id) const;
  std::optional<LinkId> find_link(SpotId source, SpotId target) const;

  // Full invariant check; returns one message per violation.
  std::vector<std::string> validate() const;

 private:
  struct BatchMark {
    std::size_t op_count = 0;
    std::uint64_t version = 0;
  };

  const SpotRecord& alive_spot(SpotId id) const;
  SpotRecord& alive_spot(SpotId id);
  void check_timepoint(std::int32_t t) const;

  SpotId allocate_spot_slot();
  LinkId allocate_link_slot();
  void claim_spot_slot(SpotId id);
  void claim_link_slot(LinkId id);

  // Raw mutations: no validation beyond structural, no recording.
  void raw_insert_spot(SpotId id, std::int32_t t, const std::array<double, 3>& p,
                       const SymMat3& cov, TagRef tag);
  void raw_remove_spot(SpotId id);
  void raw_insert_link(LinkId id, SpotId source, SpotId target);
  void raw_remove_link(LinkId id);

  void apply_forward(const EditOp& op);
  void apply_inverse(const EditOp& op);
  void record(EditOp op);

  std::int32_t timepoint_count_;
  std::vector<SpotRecord> spots_;
  std::vector<LinkRecord> links_;
  std::set<SpotId> free_spots_;
  std::set<LinkId> free_links_;
  std::vector<TagSet> tags_;
  std::size_t alive_spots_ = 0;
  std::size_t alive_links_ = 0;
  std::uint64_t version_ = 0;

  UndoRecorder recorder_;
  EditBatch open_ops_;
  std::vector<BatchMark> marks_;
};

// Commits on scope exit unless an exception is propagating, then aborts.
class BatchScope {
 public:
  explicit BatchScope(LineageGraph& graph) : graph_(graph), exceptions_(std::uncaught_exceptions()) {
    graph_.begin_batch();
  }
  ~BatchScope() {
    if (std::uncaught_exceptions() > exceptions_) {
      graph_.abort_batch();
    } else {
      graph_.commit_batch();
    }
  }
  BatchScope(const BatchScope&) = delete;
  BatchScope& operator=(const BatchScope&) = delete;

 private:
  LineageGraph& graph_;
  int exceptions_;
};

}  // namespace trackbridge
