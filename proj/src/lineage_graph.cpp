#include "trackbridge/lineage_graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace trackbridge {

bool SymMat3::is_psd(double tol) const {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  Eigen::SelfAdjointEigenSolver<Mat3> solver(matrix(), Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff() >= -tol;
}

namespace {

std::array<double, 3> to_array(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

LineageGraph::LineageGraph(std::int32_t timepoint_count) : timepoint_count_(timepoint_count) {
  if (timepoint_count <= 0) throw ValidationError("timepoint count must be positive");
}

// ---------------------------------------------------------------------------
// slot management

SpotId LineageGraph::allocate_spot_slot() {
  if (!free_spots_.empty()) {
    SpotId id = *free_spots_.begin();
    free_spots_.erase(free_spots_.begin());
    return id;
  }
  spots_.emplace_back();
  return static_cast<SpotId>(spots_.size() - 1);
}

LinkId LineageGraph::allocate_link_slot() {
  if (!free_links_.empty()) {
    LinkId id = *free_links_.begin();
    free_links_.erase(free_links_.begin());
    return id;
  }
  links_.emplace_back();
  return static_cast<LinkId>(links_.size() - 1);
}

void LineageGraph::claim_spot_slot(SpotId id) {
  if (id < 0) throw RangeError("negative spot id");
  const auto idx = static_cast<std::size_t>(id);
  if (idx < spots_.size()) {
    if (spots_[idx].alive) throw DuplicateError("spot " + std::to_string(id) + " already alive");
    free_spots_.erase(id);
    return;
  }
  for (std::size_t i = spots_.size(); i < idx; ++i) free_spots_.insert(static_cast<SpotId>(i));
  spots_.resize(idx + 1);
}

void LineageGraph::claim_link_slot(LinkId id) {
  if (id < 0) throw RangeError("negative link id");
  const auto idx = static_cast<std::size_t>(id);
  if (idx < links_.size()) {
    if (links_[idx].alive) throw DuplicateError("link " + std::to_string(id) + " already alive");
    free_links_.erase(id);
    return;
  }
  for (std::size_t i = links_.size(); i < idx; ++i) free_links_.insert(static_cast<LinkId>(i));
  links_.resize(idx + 1);
}

// ---------------------------------------------------------------------------
// raw mutations

void LineageGraph::raw_insert_spot(SpotId id, std::int32_t t, const std::array<double, 3>& p,
                                   const SymMat3& cov, TagRef tag) {
  SpotRecord& s = spots_[static_cast<std::size_t>(id)];
  s = SpotRecord{};
  s.position = p;
  s.covariance = cov;
  s.timepoint = t;
  s.tag = tag;
  s.alive = true;
  ++alive_spots_;
}

void LineageGraph::raw_remove_spot(SpotId id) {
  SpotRecord& s = spots_[static_cast<std::size_t>(id)];
  s.alive = false;
  s.first_incoming = kNil;
  s.first_outgoing = kNil;
  free_spots_.insert(id);
  --alive_spots_;
}

void LineageGraph::raw_insert_link(LinkId id, SpotId source, SpotId target) {
  SpotRecord& src = spots_[static_cast<std::size_t>(source)];
  SpotRecord& dst = spots_[static_cast<std::size_t>(target)];
  LinkRecord& l = links_[static_cast<std::size_t>(id)];
  l.source = source;
  l.target = target;
  l.next_source_link = src.first_outgoing;
  l.next_target_link = dst.first_incoming;
  l.alive = true;
  src.first_outgoing = id;
  dst.first_incoming = id;
  ++alive_links_;
}

void LineageGraph::raw_remove_link(LinkId id) {
  LinkRecord& l = links_[static_cast<std::size_t>(id)];

  // unsplice from the source's outgoing chain
  LinkId* slot = &spots_[static_cast<std::size_t>(l.source)].first_outgoing;
  while (*slot != id) slot = &links_[static_cast<std::size_t>(*slot)].next_source_link;
  *slot = l.next_source_link;

  // and from the target's incoming chain
  slot = &spots_[static_cast<std::size_t>(l.target)].first_incoming;
  while (*slot != id) slot = &links_[static_cast<std::size_t>(*slot)].next_target_link;
  *slot = l.next_target_link;

  l.alive = false;
  l.next_source_link = kNil;
  l.next_target_link = kNil;
  free_links_.insert(id);
  --alive_links_;
}

// ---------------------------------------------------------------------------
// recording

void LineageGraph::record(EditOp op) {
  open_ops_.push_back(std::move(op));
  ++version_;
}

void LineageGraph::apply_forward(const EditOp& op) {
  switch (op.kind) {
    case EditOp::Kind::AddSpot:
      claim_spot_slot(op.id);
      raw_insert_spot(op.id, op.timepoint, op.position, op.covariance, op.tag);
      break;
    case EditOp::Kind::RemoveSpot:
      raw_remove_spot(op.id);
      break;
    case EditOp::Kind::MoveSpot:
      spots_[static_cast<std::size_t>(op.id)].position = op.position;
      break;
    case EditOp::Kind::AddLink:
      claim_link_slot(op.id);
      raw_insert_link(op.id, op.source, op.target);
      break;
    case EditOp::Kind::RemoveLink:
      raw_remove_link(op.id);
      break;
    case EditOp::Kind::SetTag:
      spots_[static_cast<std::size_t>(op.id)].tag = op.tag;
      break;
  }
}

void LineageGraph::apply_inverse(const EditOp& op) {
  switch (op.kind) {
    case EditOp::Kind::AddSpot:
      raw_remove_spot(op.id);
      break;
    case EditOp::Kind::RemoveSpot:
      claim_spot_slot(op.id);
      raw_insert_spot(op.id, op.timepoint, op.position, op.covariance, op.tag);
      break;
    case EditOp::Kind::MoveSpot:
      spots_[static_cast<std::size_t>(op.id)].position = op.previous_position;
      break;
    case EditOp::Kind::AddLink:
      raw_remove_link(op.id);
      break;
    case EditOp::Kind::RemoveLink:
      claim_link_slot(op.id);
      raw_insert_link(op.id, op.source, op.target);
      break;
    case EditOp::Kind::SetTag:
      spots_[static_cast<std::size_t>(op.id)].tag = op.previous_tag;
      break;
  }
}

void LineageGraph::begin_batch() { marks_.push_back({open_ops_.size(), version_}); }

void LineageGraph::commit_batch() {
  if (marks_.empty()) throw StateError("commit_batch without begin_batch");
  marks_.pop_back();
  if (!marks_.empty() || open_ops_.empty()) return;
  recorder_.undo_stack_.push_back(std::move(open_ops_));
  recorder_.redo_stack_.clear();
  open_ops_.clear();
}

void LineageGraph::abort_batch() {
  if (marks_.empty()) throw StateError("abort_batch without begin_batch");
  const BatchMark mark = marks_.back();
  marks_.pop_back();
  while (open_ops_.size() > mark.op_count) {
    apply_inverse(open_ops_.back());
    open_ops_.pop_back();
  }
  version_ = mark.version;
}

bool LineageGraph::undo() {
  if (batch_open()) throw StateError("undo while a batch is open");
  if (recorder_.undo_stack_.empty()) return false;
  EditBatch batch = std::move(recorder_.undo_stack_.back());
  recorder_.undo_stack_.pop_back();
  for (auto it = batch.rbegin(); it != batch.rend(); ++it) apply_inverse(*it);
  recorder_.redo_stack_.push_back(std::move(batch));
  ++version_;
  return true;
}

bool LineageGraph::redo() {
  if (batch_open()) throw StateError("redo while a batch is open");
  if (recorder_.redo_stack_.empty()) return false;
  EditBatch batch = std::move(recorder_.redo_stack_.back());
  recorder_.redo_stack_.pop_back();
  for (const EditOp& op : batch) apply_forward(op);
  recorder_.undo_stack_.push_back(std::move(batch));
  ++version_;
  return true;
}

void LineageGraph::clear_history() {
  recorder_.undo_stack_.clear();
  recorder_.redo_stack_.clear();
}

void LineageGraph::coalesce_history(std::size_t depth) {
  auto& stack = recorder_.undo_stack_;
  if (stack.size() <= depth + 1) return;
  EditBatch merged;
  for (std::size_t i = depth; i < stack.size(); ++i) {
    merged.insert(merged.end(), stack[i].begin(), stack[i].end());
  }
  stack.resize(depth);
  stack.push_back(std::move(merged));
}

// ---------------------------------------------------------------------------
// public edits

void LineageGraph::check_timepoint(std::int32_t t) const {
  if (t < 0 || t >= timepoint_count_) {
    throw RangeError("timepoint " + std::to_string(t) + " outside [0, " +
                     std::to_string(timepoint_count_) + ")");
  }
}

const SpotRecord& LineageGraph::alive_spot(SpotId id) const {
  if (!is_spot_alive(id)) throw NotFoundError("spot " + std::to_string(id) + " not found");
  return spots_[static_cast<std::size_t>(id)];
}

SpotRecord& LineageGraph::alive_spot(SpotId id) {
  if (!is_spot_alive(id)) throw NotFoundError("spot " + std::to_string(id) + " not found");
  return spots_[static_cast<std::size_t>(id)];
}

SpotId LineageGraph::add_spot(std::int32_t timepoint, const Vec3& position, const SymMat3& covariance) {
  check_timepoint(timepoint);
  if (!position.allFinite()) throw ValidationError("spot position must be finite");
  if (!covariance.is_psd()) throw ValidationError("covariance is not positive semi-definite");
  BatchScope batch(*this);
  const SpotId id = allocate_spot_slot();
  EditOp op;
  op.kind = EditOp::Kind::AddSpot;
  op.id = id;
  op.timepoint = timepoint;
  op.position = to_array(position);
  op.covariance = covariance;
  raw_insert_spot(id, timepoint, op.position, covariance, kNoTag);
  record(op);
  return id;
}

SpotId LineageGraph::add_spot(std::int32_t timepoint, const Vec3& position, const Mat3& covariance) {
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
    throw ValidationError("covariance is not symmetric");
  }
  return add_spot(timepoint, position, SymMat3::from_matrix(covariance));
}

void LineageGraph::insert_spot_at(SpotId id, std::int32_t timepoint, const Vec3& position,
                                  const SymMat3& covariance, TagRef tag) {
  check_timepoint(timepoint);
  if (!position.allFinite()) throw ValidationError("spot position must be finite");
  if (!covariance.is_psd()) throw ValidationError("covariance is not positive semi-definite");
  if (tag != kNoTag && (tag < 0 || static_cast<std::size_t>(tag) >= tags_.size())) {
    throw NotFoundError("unknown tag reference");
  }
  BatchScope batch(*this);
  claim_spot_slot(id);
  EditOp op;
  op.kind = EditOp::Kind::AddSpot;
  op.id = id;
  op.timepoint = timepoint;
  op.position = to_array(position);
  op.covariance = covariance;
  op.tag = tag;
  raw_insert_spot(id, timepoint, op.position, covariance, tag);
  record(op);
}

void LineageGraph::delete_spot(SpotId id) {
  const SpotRecord& s = alive_spot(id);
  BatchScope batch(*this);
  // cascade: incident links first
  while (s.first_incoming != kNil) delete_link(s.first_incoming);
  while (s.first_outgoing != kNil) delete_link(s.first_outgoing);
  EditOp op;
  op.kind = EditOp::Kind::RemoveSpot;
  op.id = id;
  op.timepoint = s.timepoint;
  op.position = s.position;
  op.covariance = s.covariance;
  op.tag = s.tag;
  raw_remove_spot(id);
  record(op);
}

void LineageGraph::move_spot(SpotId id, const Vec3& position) {
  SpotRecord& s = alive_spot(id);
  if (!position.allFinite()) throw ValidationError("spot position must be finite");
  BatchScope batch(*this);
  EditOp op;
  op.kind = EditOp::Kind::MoveSpot;
  op.id = id;
  op.previous_position = s.position;
  op.position = to_array(position);
  s.position = op.position;
  record(op);
}

LinkId LineageGraph::add_link(SpotId source, SpotId target) {
  const SpotRecord& src = alive_spot(source);
  const SpotRecord& dst = alive_spot(target);
  if (dst.timepoint != src.timepoint + 1) {
    throw ValidationError("link must connect timepoint t to t+1 (got " + std::to_string(src.timepoint) +
                          " -> " + std::to_string(dst.timepoint) + ")");
  }
  if (find_link(source, target)) throw DuplicateError("link already present");
  BatchScope batch(*this);
  const LinkId id = allocate_link_slot();
  raw_insert_link(id, source, target);
  EditOp op;
  op.kind = EditOp::Kind::AddLink;
  op.id = id;
  op.source = source;
  op.target = target;
  record(op);
  return id;
}

void LineageGraph::insert_link_at(LinkId id, SpotId source, SpotId target) {
  const SpotRecord& src = alive_spot(source);
  const SpotRecord& dst = alive_spot(target);
  if (dst.timepoint != src.timepoint + 1) throw ValidationError("link must connect timepoint t to t+1");
  if (find_link(source, target)) throw DuplicateError("link already present");
  BatchScope batch(*this);
  claim_link_slot(id);
  raw_insert_link(id, source, target);
  EditOp op;
  op.kind = EditOp::Kind::AddLink;
  op.id = id;
  op.source = source;
  op.target = target;
  record(op);
}

void LineageGraph::delete_link(LinkId id) {
  if (!is_link_alive(id)) throw NotFoundError("link " + std::to_string(id) + " not found");
  BatchScope batch(*this);
  const LinkRecord& l = links_[static_cast<std::size_t>(id)];
  EditOp op;
  op.kind = EditOp::Kind::RemoveLink;
  op.id = id;
  op.source = l.source;
  op.target = l.target;
  raw_remove_link(id);
  record(op);
}

void LineageGraph::set_tag(SpotId id, std::string_view tag_name) {
  SpotRecord& s = alive_spot(id);
  const auto ref = find_tag(tag_name);
  if (!ref) throw NotFoundError("unknown tag '" + std::string(tag_name) + "'");
  BatchScope batch(*this);
  EditOp op;
  op.kind = EditOp::Kind::SetTag;
  op.id = id;
  op.previous_tag = s.tag;
  op.tag = *ref;
  s.tag = *ref;
  record(op);
}

void LineageGraph::clear_tag(SpotId id) {
  SpotRecord& s = alive_spot(id);
  BatchScope batch(*this);
  EditOp op;
  op.kind = EditOp::Kind::SetTag;
  op.id = id;
  op.previous_tag = s.tag;
  op.tag = kNoTag;
  s.tag = kNoTag;
  record(op);
}

TagRef LineageGraph::define_tag(std::string_view name, Rgba color) {
  if (name.empty()) throw ValidationError("tag name must not be empty");
  if (auto existing = find_tag(name)) {
    tags_[static_cast<std::size_t>(*existing)].color = color;
    return *existing;
  }
  if (tags_.size() >= static_cast<std::size_t>(std::numeric_limits<TagRef>::max())) {
    throw RangeError("too many tag sets");
  }
  tags_.push_back({std::string(name), color});
  return static_cast<TagRef>(tags_.size() - 1);
}

std::optional<TagRef> LineageGraph::find_tag(std::string_view name) const {
  for (std::size_t i = 0; i < tags_.size(); ++i) {
    if (tags_[i].name == name) return static_cast<TagRef>(i);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// queries

bool LineageGraph::is_spot_alive(SpotId id) const {
  return id >= 0 && static_cast<std::size_t>(id) < spots_.size() && spots_[static_cast<std::size_t>(id)].alive;
}

bool LineageGraph::is_link_alive(LinkId id) const {
  return id >= 0 && static_cast<std::size_t>(id) < links_.size() && links_[static_cast<std::size_t>(id)].alive;
}

const SpotRecord& LineageGraph::spot(SpotId id) const { return alive_spot(id); }

const LinkRecord& LineageGraph::link(LinkId id) const {
  if (!is_link_alive(id)) throw NotFoundError("link " + std::to_string(id) + " not found");
  return links_[static_cast<std::size_t>(id)];
}

std::string LineageGraph::tag_name(SpotId id) const {
  const TagRef ref = alive_spot(id).tag;
  return ref == kNoTag ? std::string() : tags_[static_cast<std::size_t>(ref)].name;
}

std::vector<SpotId> LineageGraph::spots_at_timepoint(std::int32_t t) const {
  std::vector<SpotId> out;
  for (std::size_t i = 0; i < spots_.size(); ++i) {
    if (spots_[i].alive && spots_[i].timepoint == t) out.push_back(static_cast<SpotId>(i));
  }
  return out;
}

std::vector<SpotId> LineageGraph::alive_spots() const {
  std::vector<SpotId> out;
  out.reserve(alive_spots_);
  for (std::size_t i = 0; i < spots_.size(); ++i) {
    if (spots_[i].alive) out.push_back(static_cast<SpotId>(i));
  }
  return out;
}

std::vector<LinkId> LineageGraph::alive_links() const {
  std::vector<LinkId> out;
  out.reserve(alive_links_);
  for (std::size_t i = 0; i < links_.size(); ++i) {
    if (links_[i].alive) out.push_back(static_cast<LinkId>(i));
  }
  return out;
}

std::vector<LinkId> LineageGraph::outgoing_links(SpotId id) const {
  std::vector<LinkId> out;
  for (LinkId l = alive_spot(id).first_outgoing; l != kNil; l = links_[static_cast<std::size_t>(l)].next_source_link) {
    out.push_back(l);
  }
  return out;
}

std::vector<LinkId> LineageGraph::incoming_links(SpotId id) const {
  std::vector<LinkId> out;
  for (LinkId l = alive_spot(id).first_incoming; l != kNil; l = links_[static_cast<std::size_t>(l)].next_target_link) {
    out.push_back(l);
  }
  return out;
}

std::optional<LinkId> LineageGraph::find_link(SpotId source, SpotId target) const {
  for (LinkId l = alive_spot(source).first_outgoing; l != kNil; l = links_[static_cast<std::size_t>(l)].next_source_link) {
    if (links_[static_cast<std::size_t>(l)].target == target) return l;
  }
  return std::nullopt;
}

std::vector<std::string> LineageGraph::validate() const {
  std::vector<std::string> issues;
  auto fail = [&issues](const std::string& msg) { issues.push_back(msg); };

  std::size_t alive_s = 0;
  std::size_t alive_l = 0;
  const std::size_t link_bound = links_.size() + 1;

  // scan-based adjacency
  std::vector<std::vector<LinkId>> scan_out(spots_.size());
  std::vector<std::vector<LinkId>> scan_in(spots_.size());
  for (std::size_t i = 0; i < links_.size(); ++i) {
    const LinkRecord& l = links_[i];
    if (!l.alive) {
      if (!free_links_.count(static_cast<LinkId>(i))) fail("dead link " + std::to_string(i) + " missing from free list");
      continue;
    }
    ++alive_l;
    if (free_links_.count(static_cast<LinkId>(i))) fail("alive link " + std::to_string(i) + " in free list");
    if (!is_spot_alive(l.source) || !is_spot_alive(l.target)) {
      fail("link " + std::to_string(i) + " references a dead spot");
      continue;
    }
    if (spots_[static_cast<std::size_t>(l.target)].timepoint != spots_[static_cast<std::size_t>(l.source)].timepoint + 1) {
      fail("link " + std::to_string(i) + " does not point forward by one timepoint");
    }
    scan_out[static_cast<std::size_t>(l.source)].push_back(static_cast<LinkId>(i));
    scan_in[static_cast<std::size_t>(l.target)].push_back(static_cast<LinkId>(i));
  }

  for (std::size_t i = 0; i < spots_.size(); ++i) {
    const SpotRecord& s = spots_[i];
    if (!s.alive) {
      if (!free_spots_.count(static_cast<SpotId>(i))) fail("dead spot " + std::to_string(i) + " missing from free list");
      continue;
    }
    ++alive_s;
    if (free_spots_.count(static_cast<SpotId>(i))) fail("alive spot " + std::to_string(i) + " in free list");
    if (!s.covariance.is_psd()) fail("spot " + std::to_string(i) + " covariance not PSD");
    if (s.timepoint < 0 || s.timepoint >= timepoint_count_) fail("spot " + std::to_string(i) + " timepoint out of range");
    if (s.tag != kNoTag && (s.tag < 0 || static_cast<std::size_t>(s.tag) >= tags_.size())) {
      fail("spot " + std::to_string(i) + " has unknown tag");
    }

    auto walk = [&](LinkId head, bool outgoing) {
      std::vector<LinkId> chain;
      for (LinkId l = head; l != kNil;) {
        if (l < 0 || static_cast<std::size_t>(l) >= links_.size() || !links_[static_cast<std::size_t>(l)].alive) {
          fail("spot " + std::to_string(i) + " chain references invalid link " + std::to_string(l));
          break;
        }
        if (chain.size() > link_bound) {
          fail("spot " + std::to_string(i) + " chain is cyclic");
          break;
        }
        const LinkRecord& rec = links_[static_cast<std::size_t>(l)];
        if ((outgoing ? rec.source : rec.target) != static_cast<SpotId>(i)) {
          fail("spot " + std::to_string(i) + " chain contains foreign link " + std::to_string(l));
        }
        chain.push_back(l);
        l = outgoing ? rec.next_source_link : rec.next_target_link;
      }
      std::sort(chain.begin(), chain.end());
      return chain;
    };
    if (walk(s.first_outgoing, true) != scan_out[i]) fail("spot " + std::to_string(i) + " outgoing chain != scan");
    if (walk(s.first_incoming, false) != scan_in[i]) fail("spot " + std::to_string(i) + " incoming chain != scan");
  }

  if (alive_s != alive_spots_) fail("alive spot counter mismatch");
  if (alive_l != alive_links_) fail("alive link counter mismatch");
  for (SpotId id : free_spots_) {
    if (id < 0 || static_cast<std::size_t>(id) >= spots_.size()) fail("free spot slot out of range");
  }
  for (LinkId id : free_links_) {
    if (id < 0 || static_cast<std::size_t>(id) >= links_.size()) fail("free link slot out of range");
  }
  return issues;
}

}  // namespace trackbridge
