#include "trialforge/insertion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <unordered_map>

#include "json.hpp"
#include "trialforge/rng.hpp"

namespace trialforge {

namespace {

// Region of centers whose whole extent stays inside the inclusive box; empty
// (lo > hi on an axis) when the footprint cannot fit.
VoxelBox center_region(const VoxelBox& box, std::span<const VoxelIndex> offsets,
                       const Dims& dims) {
  VoxelIndex omin = offsets.front(), omax = offsets.front();
  for (const auto& o : offsets) {
    omin = {std::min(omin.x, o.x), std::min(omin.y, o.y), std::min(omin.z, o.z)};
    omax = {std::max(omax.x, o.x), std::max(omax.y, o.y), std::max(omax.z, o.z)};
  }
  VoxelBox r{{box.lo.x - omin.x, box.lo.y - omin.y, box.lo.z - omin.z},
             {box.hi.x - omax.x, box.hi.y - omax.y, box.hi.z - omax.z}};
  r.lo = {std::max(r.lo.x, 0), std::max(r.lo.y, 0), std::max(r.lo.z, 0)};
  r.hi = {std::min(r.hi.x, dims.nx - 1), std::min(r.hi.y, dims.ny - 1),
          std::min(r.hi.z, dims.nz - 1)};
  return r;
}

bool region_empty(const VoxelBox& r) {
  return r.lo.x > r.hi.x || r.lo.y > r.hi.y || r.lo.z > r.hi.z;
}

struct SnapHit {
  VoxelIndex center;
  double dist_voxels = 0;
};

// Centers of `region` in order of squared Euclidean voxel distance to `from`
// (ties to the smallest linear index); first one whose whole extent satisfies
// valid_at wins. Offsets stay inside the source box by construction of
// center_region, so valid_at never needs a bounds check.
template <typename ValidAt>
std::optional<SnapHit> nearest_center(const LabelVolume& vol, const VoxelIndex& from,
                                      const VoxelBox& region,
                                      std::span<const VoxelIndex> offsets,
                                      ValidAt&& valid_at) {
  std::vector<std::uint64_t> order;
  order.reserve(static_cast<std::size_t>(region.hi.x - region.lo.x + 1) *
                static_cast<std::size_t>(region.hi.y - region.lo.y + 1) *
                static_cast<std::size_t>(region.hi.z - region.lo.z + 1));
  for (int z = region.lo.z; z <= region.hi.z; ++z)
    for (int y = region.lo.y; y <= region.hi.y; ++y)
      for (int x = region.lo.x; x <= region.hi.x; ++x) {
        const auto dx = static_cast<std::int64_t>(x - from.x);
        const auto dy = static_cast<std::int64_t>(y - from.y);
        const auto dz = static_cast<std::int64_t>(z - from.z);
        const auto d2 = static_cast<std::uint64_t>(dx * dx + dy * dy + dz * dz);
        order.push_back((d2 << 32) | static_cast<std::uint64_t>(vol.linear(x, y, z)));
      }
  std::sort(order.begin(), order.end());
  for (const auto packed : order) {
    const auto c = vol.unlinear(packed & 0xffffffffull);
    bool ok = true;
    for (const auto& o : offsets) {
      if (!valid_at(VoxelIndex{c.x + o.x, c.y + o.y, c.z + o.z})) {
        ok = false;
        break;
      }
    }
    if (ok)
      return SnapHit{c, std::sqrt(static_cast<double>(packed >> 32))};
  }
  return std::nullopt;
}

// Mask cropped to its foreground bounding box (same spacing); keeps the donor
// resample proportional to the nodule, not the scan.
LabelVolume crop_to_foreground(const LabelVolume& mask) {
  const auto box = mask_bbox(mask);
  if (!box) return {};
  const Dims dims{box->hi.x - box->lo.x + 1, box->hi.y - box->lo.y + 1,
                  box->hi.z - box->lo.z + 1};
  LabelVolume out(dims, mask.spacing());
  for (int z = 0; z < dims.nz; ++z)
    for (int y = 0; y < dims.ny; ++y)
      for (int x = 0; x < dims.nx; ++x)
        out.at(x, y, z) = mask.at(box->lo.x + x, box->lo.y + y, box->lo.z + z);
  return out;
}

int percentile_axis(double pct, int lo, int hi) {
  const auto v = lo + static_cast<int>(std::llround(pct / 100.0 * (hi - lo)));
  return std::clamp(v, lo, hi);
}

double clamp_pct(double pct) { return std::clamp(pct, 0.0, 100.0); }

// Everything insert needs from a host, computable once per patient.
struct HostContext {
  const PhantomPatient* host = nullptr;
  std::array<std::optional<VoxelBox>, 5> lobe_box;
  std::vector<VoxelIndex> lung_edge;
};

HostContext host_context(const PhantomPatient& host) {
  HostContext ctx;
  ctx.host = &host;
  for (std::size_t i = 0; i < labels::lobes.size(); ++i)
    ctx.lobe_box[i] = label_bbox(host.anatomy, labels::lobes[i]);
  ctx.lung_edge = lung_boundary(host.anatomy);
  return ctx;
}

// The five insertion steps against a shared working volume. Fills everything
// in the result except `composed`, and paints accepted voxels into `composed`.
InsertionResult insert_core(const ManifestRow& row,
                            std::span<const VoxelIndex> offsets,
                            const ReinsertionBlueprint& blueprint,
                            const HostContext& ctx, LabelVolume& composed,
                            const InsertionConstraints& c, bool permit_overlap) {
  const LabelVolume& anatomy = ctx.host->anatomy;
  const Spacing& sp = anatomy.spacing();

  InsertionResult r;
  r.row_index = row.row_index;
  r.lobe = row.target_lobe;
  r.alpha = row.alpha;

  if (row.alpha < c.alpha_min || row.alpha > c.alpha_max) {
    r.reason = "alpha_bounds";
    return r;
  }
  if (offsets.empty()) {
    r.reason = "empty_resample";
    return r;
  }
  const auto lobe_index = static_cast<std::size_t>(row.target_lobe);
  const std::uint8_t lobe_label = labels::lobes[lobe_index];
  if (!ctx.lobe_box[lobe_index])
    throw error("host " + ctx.host->patient_id + " lacks lobe " +
                std::string(to_string(row.target_lobe)));
  const VoxelBox& box = *ctx.lobe_box[lobe_index];
  const VoxelBox region = center_region(box, offsets, anatomy.dims());
  if (region_empty(region)) {
    r.reason = "no_feasible_position";
    return r;
  }

  const auto valid_at = [&](const VoxelIndex& v) {
    return anatomy.at(v) == lobe_label;
  };

  std::string last_reason = "no_feasible_position";
  for (int attempt = 0; attempt <= c.max_replacements; ++attempt) {
    VoxelIndex cand;
    if (attempt == 0) {
      cand = anatomy.nearest_voxel(row.placement);
    } else {
      RandomStream js(0, "insert/jitter", row.row_index,
                      static_cast<std::uint64_t>(attempt));
      const double ml = clamp_pct(blueprint.lobe_ml_pct + js.next_unit() * 10.0 - 5.0);
      const double ap = clamp_pct(blueprint.lobe_ap_pct + js.next_unit() * 10.0 - 5.0);
      const double cc = clamp_pct(blueprint.lobe_cc_pct + js.next_unit() * 10.0 - 5.0);
      cand = {percentile_axis(ml, box.lo.x, box.hi.x),
              percentile_axis(ap, box.lo.y, box.hi.y),
              percentile_axis(cc, box.lo.z, box.hi.z)};
    }

    const auto hit = nearest_center(anatomy, cand, region, offsets, valid_at);
    if (!hit) {
      // Existence is global: no jitter can conjure a valid position.
      r.reason = "no_feasible_position";
      return r;
    }
    const double snap_mm =
        distance_mm(anatomy.world(hit->center), anatomy.world(cand));
    if (snap_mm > c.max_snap_mm) {
      last_reason = "snap_cap";
      continue;
    }
    const WorldPoint center = anatomy.world(hit->center);
    const double rho = min_distance_mm(ctx.lung_edge, sp, center);
    if (rho < c.rho_min_mm) {
      last_reason = "pleural_distance";
      continue;
    }
    std::size_t overlap = 0;
    for (const auto& o : offsets)
      if (composed.at(hit->center.x + o.x, hit->center.y + o.y,
                      hit->center.z + o.z) == labels::nodule)
        ++overlap;
    if (overlap > 0 && !permit_overlap) {
      last_reason = "overlap";
      continue;
    }

    for (const auto& o : offsets)
      composed.at(hit->center.x + o.x, hit->center.y + o.y, hit->center.z + o.z) =
          labels::nodule;
    r.status = InsertionStatus::accepted;
    r.snap_triggered = hit->dist_voxels > 0;
    r.snap_distance_voxels = hit->dist_voxels;
    r.pleural_distance_mm = rho;
    r.overlap_voxels = overlap;
    r.final_placement = center;
    return r;
  }
  r.reason = last_reason;
  return r;
}

std::vector<VoxelIndex> resampled_offsets(const LabelVolume& donor_mask,
                                          const Spacing& host_spacing,
                                          double alpha) {
  const LabelVolume cropped = crop_to_foreground(donor_mask);
  if (cropped.empty()) return {};
  return mask_extent_offsets(
      resample_mask(cropped, cropped.spacing(), host_spacing, alpha));
}

}  // namespace

std::vector<VoxelIndex> mask_extent_offsets(const LabelVolume& mask) {
  if (count_nonzero(mask) == 0) return {};
  const VoxelIndex anchor = mask.nearest_voxel(mask_centroid(mask));
  std::vector<VoxelIndex> offsets;
  const auto& d = mask.dims();
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x)
        if (mask.at(x, y, z) != 0)
          offsets.push_back({x - anchor.x, y - anchor.y, z - anchor.z});
  return offsets;
}

std::pair<WorldPoint, double> snap_correct(const WorldPoint& candidate,
                                           std::span<const VoxelIndex> extent_offsets,
                                           const LabelVolume& lobe_mask) {
  if (extent_offsets.empty()) throw error("snap_correct: empty extent");
  const auto box = mask_bbox(lobe_mask);
  if (!box) throw error("snap_correct: empty lobe mask");
  const VoxelBox region = center_region(*box, extent_offsets, lobe_mask.dims());
  if (region_empty(region)) throw error("snap_correct: no valid position exists");
  const auto hit = nearest_center(
      lobe_mask, lobe_mask.nearest_voxel(candidate), region, extent_offsets,
      [&](const VoxelIndex& v) { return lobe_mask.at(v) != 0; });
  if (!hit) throw error("snap_correct: no valid position exists");
  return {lobe_mask.world(hit->center), hit->dist_voxels};
}

InsertionResult insert(const ManifestRow& row, const LabelVolume& donor_mask,
                       const NoduleProfile& donor_profile, const PhantomPatient& host,
                       const InsertionConstraints& constraints, bool permit_overlap) {
  if (!donor_profile.blueprint.valid)
    throw error("donor " + donor_profile.patient_id + "#" +
                std::to_string(donor_profile.nodule_index) +
                " has no reinsertion blueprint");
  const HostContext ctx = host_context(host);
  std::vector<VoxelIndex> offsets;
  if (row.alpha >= constraints.alpha_min && row.alpha <= constraints.alpha_max)
    offsets = resampled_offsets(donor_mask, host.anatomy.spacing(), row.alpha);
  LabelVolume composed = host.anatomy;
  auto result = insert_core(row, offsets, donor_profile.blueprint, ctx, composed,
                            constraints, permit_overlap);
  if (result.status == InsertionStatus::accepted)
    result.composed = std::move(composed);
  return result;
}

std::pair<std::vector<InsertionResult>, InsertionReport> insert_batch(
    const Manifest& manifest, std::span<const PhantomPatient> patients,
    std::span<const NoduleProfile> profiles,
    const InsertionConstraints& constraints) {
  std::unordered_map<std::string_view, const PhantomPatient*> by_patient;
  for (const auto& p : patients) by_patient.emplace(p.patient_id, &p);
  std::unordered_map<std::string, const NoduleProfile*> by_nodule;
  for (const auto& p : profiles)
    by_nodule.emplace(p.patient_id + "#" + std::to_string(p.nodule_index), &p);

  // Resolve every row up front; an unresolvable row is corrupt input, not an
  // insertion failure.
  struct Resolved {
    const PhantomPatient* host;
    const PhantomPatient* donor;
    const NoduleProfile* profile;
  };
  std::vector<Resolved> resolved;
  resolved.reserve(manifest.rows.size());
  for (const auto& row : manifest.rows) {
    const auto host_it = by_patient.find(row.host_patient);
    if (host_it == by_patient.end())
      throw error("manifest host " + row.host_patient + " not in cohort");
    const auto donor_it = by_patient.find(row.donor_patient);
    if (donor_it == by_patient.end())
      throw error("manifest donor " + row.donor_patient + " not in cohort");
    const auto prof_it =
        by_nodule.find(row.donor_patient + "#" + std::to_string(row.donor_nodule));
    if (prof_it == by_nodule.end())
      throw error("no profile for donor " + row.donor_patient + "#" +
                  std::to_string(row.donor_nodule));
    if (row.donor_nodule < 0 ||
        static_cast<std::size_t>(row.donor_nodule) >=
            donor_it->second->nodule_masks.size())
      throw error("donor nodule index out of range for " + row.donor_patient);
    resolved.push_back({host_it->second, donor_it->second, prof_it->second});
  }

  const bool grouped = manifest.mode == "M10" || manifest.mode == "M12";
  std::unordered_map<std::string_view, HostContext> contexts;
  std::unordered_map<std::string, std::vector<VoxelIndex>> offset_cache;

  const auto context_for = [&](const PhantomPatient& host) -> const HostContext& {
    auto it = contexts.find(host.patient_id);
    if (it == contexts.end())
      it = contexts.emplace(host.patient_id, host_context(host)).first;
    return it->second;
  };
  const auto offsets_for = [&](const Resolved& rr,
                               double alpha) -> const std::vector<VoxelIndex>& {
    const auto& sp = rr.host->anatomy.spacing();
    std::string key = rr.profile->patient_id + "#" +
                      std::to_string(rr.profile->nodule_index) + "@" +
                      shortest_double(alpha) + "/" + shortest_double(sp.sx) + "," +
                      shortest_double(sp.sy) + "," + shortest_double(sp.sz);
    auto it = offset_cache.find(key);
    if (it == offset_cache.end()) {
      it = offset_cache
               .emplace(std::move(key),
                        resampled_offsets(
                            rr.donor->nodule_masks[static_cast<std::size_t>(
                                rr.profile->nodule_index)],
                            sp, alpha))
               .first;
    }
    return it->second;
  };

  std::vector<InsertionResult> results(manifest.rows.size());
  std::size_t i = 0;
  while (i < manifest.rows.size()) {
    // A group is a maximal run of rows on one host (grouped modes only).
    std::size_t end = i + 1;
    if (grouped)
      while (end < manifest.rows.size() &&
             manifest.rows[end].host_patient == manifest.rows[i].host_patient)
        ++end;

    LabelVolume composed = resolved[i].host->anatomy;
    std::vector<std::size_t> accepted_rows;
    for (std::size_t j = i; j < end; ++j) {
      const auto& row = manifest.rows[j];
      const auto& rr = resolved[j];
      InsertionResult r;
      try {
        if (!rr.profile->blueprint.valid)
          throw error("donor " + row.donor_patient + "#" +
                      std::to_string(row.donor_nodule) +
                      " has no reinsertion blueprint");
        const bool alpha_ok = row.alpha >= constraints.alpha_min &&
                              row.alpha <= constraints.alpha_max;
        static const std::vector<VoxelIndex> kNoOffsets;
        const auto& offsets =
            alpha_ok ? offsets_for(rr, row.alpha) : kNoOffsets;
        r = insert_core(row, offsets, rr.profile->blueprint,
                        context_for(*rr.host), composed, constraints, grouped);
      } catch (const error& e) {
        r = InsertionResult{};
        r.row_index = row.row_index;
        r.lobe = row.target_lobe;
        r.alpha = row.alpha;
        r.reason = std::string("structural: ") + e.what();
      }
      if (r.status == InsertionStatus::accepted) accepted_rows.push_back(j);
      results[j] = std::move(r);
    }
    // Group rows share the final composition; independent rows own theirs.
    for (std::size_t k = 0; k < accepted_rows.size(); ++k) {
      if (k + 1 == accepted_rows.size())
        results[accepted_rows[k]].composed = std::move(composed);
      else
        results[accepted_rows[k]].composed = composed;
    }
    i = end;
  }
  InsertionReport report = insertion_report(manifest, results, constraints);
  return {std::move(results), std::move(report)};
}

InsertionReport insertion_report(const Manifest& manifest,
                                 std::span<const InsertionResult> results,
                                 const InsertionConstraints& constraints) {
  InsertionReport rep;
  rep.mode = manifest.mode;
  rep.subcohort = manifest.subcohort;
  rep.rows = results.size();
  const double width = (constraints.alpha_max - constraints.alpha_min) / 6.0;
  for (int i = 0; i < 7; ++i)
    rep.alpha_edges[static_cast<std::size_t>(i)] = constraints.alpha_min + i * width;

  std::vector<double> pleural;
  double snap_sum = 0;
  std::size_t overlapping = 0;
  for (const auto& r : results) {
    if (r.status != InsertionStatus::accepted) {
      ++rep.rejections[r.reason];
      continue;
    }
    ++rep.accepted;
    if (r.snap_triggered) {
      ++rep.snap_count;
      snap_sum += r.snap_distance_voxels;
    }
    pleural.push_back(r.pleural_distance_mm);
    const int bin = std::min(
        5, std::max(0, static_cast<int>((r.alpha - constraints.alpha_min) / width)));
    ++rep.alpha_histogram[static_cast<std::size_t>(bin)];
    ++rep.lobe_counts[static_cast<std::size_t>(r.lobe)];
    if (r.overlap_voxels > 0) ++overlapping;
  }
  if (rep.rows > 0) {
    rep.success_rate = static_cast<double>(rep.accepted) / static_cast<double>(rep.rows);
    rep.snap_rate = static_cast<double>(rep.snap_count) / static_cast<double>(rep.rows);
  }
  if (rep.snap_count > 0)
    rep.mean_snap_distance_voxels = snap_sum / static_cast<double>(rep.snap_count);
  if (!pleural.empty()) {
    rep.pleural_mean_mm = std::accumulate(pleural.begin(), pleural.end(), 0.0) /
                          static_cast<double>(pleural.size());
    std::sort(pleural.begin(), pleural.end());
    const auto n = pleural.size();
    rep.pleural_median_mm = n % 2 ? pleural[n / 2]
                                  : 0.5 * (pleural[n / 2 - 1] + pleural[n / 2]);
    rep.overlap_rate = static_cast<double>(overlapping) / static_cast<double>(n);
  }
  return rep;
}

void write_insertion_csv(const std::filesystem::path& path,
                         std::span<const InsertionResult> results) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("cannot open for writing: " + path.string());
  out << "row_index,status,snap,snap_dist,pleural_mm,alpha,overlap\n";
  for (const auto& r : results) {
    const std::string status = r.status == InsertionStatus::accepted
                                   ? "accepted"
                                   : "rejected(" + r.reason + ")";
    out << r.row_index << ',' << status << ',' << (r.snap_triggered ? 1 : 0) << ','
        << shortest_double(r.snap_distance_voxels) << ','
        << shortest_double(r.pleural_distance_mm) << ','
        << shortest_double(r.alpha) << ',' << r.overlap_voxels << '\n';
  }
  if (!out) throw error("write failed: " + path.string());
}

std::string insertion_report_json(const InsertionReport& report) {
  nlohmann::ordered_json j;
  j["mode"] = report.mode;
  j["subcohort"] = report.subcohort;
  j["rows"] = report.rows;
  j["accepted"] = report.accepted;
  j["success_rate"] = report.success_rate;
  j["snap_rate"] = report.snap_rate;
  j["mean_snap_distance_voxels"] = report.mean_snap_distance_voxels;
  j["pleural_mean_mm"] = report.pleural_mean_mm;
  j["pleural_median_mm"] = report.pleural_median_mm;
  j["alpha_histogram"]["edges"] = report.alpha_edges;
  j["alpha_histogram"]["counts"] = report.alpha_histogram;
  nlohmann::ordered_json lobes = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < report.lobe_counts.size(); ++i)
    lobes[std::string(to_string(static_cast<Lobe>(i)))] = report.lobe_counts[i];
  j["lobe_counts"] = std::move(lobes);
  j["overlap_rate"] = report.overlap_rate;
  j["rejections"] = report.rejections;
  return j.dump(2) + "\n";
}

void write_insertion_report(const std::filesystem::path& path,
                            const InsertionReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("cannot open for writing: " + path.string());
  out << insertion_report_json(report);
  if (!out) throw error("write failed: " + path.string());
}

}  // namespace trialforge
