#include "roadmesh/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "roadmesh/error.hpp"
#include "roadmesh/parallel.hpp"

namespace roadmesh {

namespace {

std::vector<Vec3> to_camera(const SE3Pose& camera_to_world, std::span<const Vec3> positions) {
  const Mat3 Rwc = camera_to_world.rotation.transpose();
  std::vector<Vec3> pc(positions.size());
  for (std::size_t v = 0; v < positions.size(); ++v) pc[v] = Rwc * (positions[v] - camera_to_world.translation);
  return pc;
}

inline Vec3 pixel_ray(const CameraIntrinsics& K, int row, int col) {
  return {(col + 0.5 - K.cx) / K.fx, (row + 0.5 - K.cy) / K.fy, 1.0};
}

struct PreparedFace {
  std::int32_t id = 0;
  std::array<Vec3, 3> n;  // P1xP2, P2xP0, P0xP1
  double det = 0.0;       // P0 . (P1 x P2)
  int r0 = 0, r1 = -1, c0 = 0, c1 = -1;
};

}  // namespace

RasterResult rasterize(const SE3Pose& camera_to_world, const CameraIntrinsics& K, const RenderGeometry& g) {
  const int W = K.width;
  const int H = K.height;
  const int C = g.num_classes;
  const std::vector<Vec3> pc = to_camera(camera_to_world, g.positions);

  std::vector<PreparedFace> prepared;
  prepared.reserve(g.faces.size() / 4);
  for (std::size_t f = 0; f < g.faces.size(); ++f) {
    const Face& face = g.faces[f];
    const Vec3& P0 = pc[static_cast<std::size_t>(face[0])];
    const Vec3& P1 = pc[static_cast<std::size_t>(face[1])];
    const Vec3& P2 = pc[static_cast<std::size_t>(face[2])];
    if (P0.z() <= kNearPlane || P1.z() <= kNearPlane || P2.z() <= kNearPlane) continue;
    const Vec3 normal = (P1 - P0).cross(P2 - P0);
    if (!(normal.dot(P0) < 0.0)) continue;  // back-facing or edge-on
    double umin = std::numeric_limits<double>::infinity(), umax = -umin, vmin = umin, vmax = -umin;
    for (const Vec3* P : {&P0, &P1, &P2}) {
      const double u = K.fx * P->x() / P->z() + K.cx;
      const double v = K.fy * P->y() / P->z() + K.cy;
      umin = std::min(umin, u);
      umax = std::max(umax, u);
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
    PreparedFace pf;
    pf.c0 = std::max(0, static_cast<int>(std::ceil(umin - 0.5)));
    pf.c1 = std::min(W - 1, static_cast<int>(std::floor(umax - 0.5)));
    pf.r0 = std::max(0, static_cast<int>(std::ceil(vmin - 0.5)));
    pf.r1 = std::min(H - 1, static_cast<int>(std::floor(vmax - 0.5)));
    if (pf.c0 > pf.c1 || pf.r0 > pf.r1) continue;
    pf.id = static_cast<std::int32_t>(f);
    pf.n = {P1.cross(P2), P2.cross(P0), P0.cross(P1)};
    pf.det = P0.dot(pf.n[0]);
    prepared.push_back(pf);
  }

  // Bin faces into tiles; bins keep ascending face order.
  const int tiles_x = (W + kTileSize - 1) / kTileSize;
  const int tiles_y = (H + kTileSize - 1) / kTileSize;
  std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    const PreparedFace& pf = prepared[i];
    for (int ty = pf.r0 / kTileSize; ty <= pf.r1 / kTileSize; ++ty) {
      for (int tx = pf.c0 / kTileSize; tx <= pf.c1 / kTileSize; ++tx) {
        bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(static_cast<std::uint32_t>(i));
      }
    }
  }

  RasterResult result;
  FragmentBuffer& frag = result.fragments;
  frag.width = W;
  frag.height = H;
  const std::size_t npx = static_cast<std::size_t>(W) * H;
  frag.face.assign(npx, -1);
  frag.bary.assign(npx, {0.0, 0.0, 0.0});
  frag.depth.assign(npx, 0.0);

  parallel_for(bins.size(), [&](std::size_t tile) {
    const int ty = static_cast<int>(tile) / tiles_x;
    const int tx = static_cast<int>(tile) % tiles_x;
    const int tr0 = ty * kTileSize, tr1 = std::min(H, tr0 + kTileSize) - 1;
    const int tc0 = tx * kTileSize, tc1 = std::min(W, tc0 + kTileSize) - 1;
    for (std::uint32_t idx : bins[tile]) {
      const PreparedFace& pf = prepared[idx];
      const int r0 = std::max(tr0, pf.r0), r1 = std::min(tr1, pf.r1);
      const int c0 = std::max(tc0, pf.c0), c1 = std::min(tc1, pf.c1);
      for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
          const Vec3 ray = pixel_ray(K, r, c);
          const double e0 = ray.dot(pf.n[0]);
          const double e1 = ray.dot(pf.n[1]);
          const double e2 = ray.dot(pf.n[2]);
          const double s = e0 + e1 + e2;
          // Front-facing: s < 0 on the triangle, and b_k = e_k / s >= 0.
          if (!(s < 0.0) || e0 > 0.0 || e1 > 0.0 || e2 > 0.0) continue;
          const double d = pf.det / s;
          const std::size_t p = static_cast<std::size_t>(r) * W + c;
          // Bins are in ascending face order, so strict '<' keeps the lower
          // face index on exact depth ties.
          if (frag.face[p] >= 0 && !(d < frag.depth[p])) continue;
          frag.face[p] = pf.id;
          frag.depth[p] = d;
          frag.bary[p] = {e0 / s, e1 / s, e2 / s};
        }
      }
    }
  });

  RenderOutput& out = result.output;
  out.color = ImageD(W, H, 3, 0.0);
  out.semantics = ImageD(W, H, std::max(C, 1), 0.0);
  out.depth = ImageD(W, H, 1, 0.0);
  out.mask = ImageU8(W, H, 1, 0);
  for (std::size_t p = 0; p < npx; ++p) {
    const std::int32_t f = frag.face[p];
    if (f < 0) continue;
    const Face& face = g.faces[static_cast<std::size_t>(f)];
    const auto& b = frag.bary[p];
    out.mask.data[p] = 1;
    out.depth.data[p] = frag.depth[p];
    for (int ch = 0; ch < 3; ++ch) {
      double v = 0.0;
      for (int k = 0; k < 3; ++k) v += b[static_cast<std::size_t>(k)] * g.rgb[static_cast<std::size_t>(face[static_cast<std::size_t>(k)]) * 3 + ch];
      out.color.data[p * 3 + static_cast<std::size_t>(ch)] = v;
    }
    for (int s = 0; s < C; ++s) {
      double v = 0.0;
      for (int k = 0; k < 3; ++k) {
        v += b[static_cast<std::size_t>(k)] * g.sem[static_cast<std::size_t>(face[static_cast<std::size_t>(k)]) * C + s];
      }
      out.semantics.data[p * static_cast<std::size_t>(C) + static_cast<std::size_t>(s)] = v;
    }
  }
  return result;
}

RenderGradients rasterize_backward(const FragmentBuffer& frag, const ImageD* grad_color, const ImageD* grad_sem,
                                   const ImageD* grad_depth, const ViewCamera& camera, const RenderGeometry& g,
                                   const BackwardOptions& options) {
  const int W = frag.width;
  const int H = frag.height;
  const int C = g.num_classes;
  const auto check = [&](const ImageD* img, int channels, const char* what) {
    if (img && (!img->same_shape(W, H) || img->channels != channels)) {
      throw UsageError(std::string("rasterize_backward: ") + what + " gradient shape does not match the fragments");
    }
  };
  check(grad_color, 3, "color");
  check(grad_sem, C, "semantic");
  check(grad_depth, 1, "depth");
  if (camera.intrinsics.width != W || camera.intrinsics.height != H) {
    throw UsageError("rasterize_backward: camera intrinsics do not match the fragments");
  }

  const std::size_t nv = g.positions.size();
  RenderGradients out;
  if (options.attributes) {
    out.rgb.assign(nv * 3, 0.0);
    out.sem.assign(nv * static_cast<std::size_t>(C), 0.0);
  }
  if (options.geometry) out.z.assign(nv, 0.0);

  const SE3Pose cam = camera.camera_to_world();
  std::vector<Vec3> pc;
  std::vector<Vec3> gcam;
  if (options.geometry) {
    pc = to_camera(cam, g.positions);
    gcam.assign(nv, Vec3::Zero());
  }

  const std::size_t npx = frag.size();
  for (std::size_t p = 0; p < npx; ++p) {
    const std::int32_t f = frag.face[p];
    if (f < 0) continue;
    if (static_cast<std::size_t>(f) >= g.faces.size()) {
      throw UsageError("rasterize_backward: fragment face id outside the geometry");
    }
    const Face& face = g.faces[static_cast<std::size_t>(f)];
    const auto& b = frag.bary[p];
    const double* gc = grad_color ? grad_color->data.data() + p * 3 : nullptr;
    const double* gs = grad_sem ? grad_sem->data.data() + p * static_cast<std::size_t>(C) : nullptr;
    const double gd = grad_depth ? grad_depth->data[p] : 0.0;

    if (options.attributes) {
      for (int k = 0; k < 3; ++k) {
        const auto v = static_cast<std::size_t>(face[static_cast<std::size_t>(k)]);
        const double w = b[static_cast<std::size_t>(k)];
        if (gc) {
          for (int ch = 0; ch < 3; ++ch) out.rgb[v * 3 + static_cast<std::size_t>(ch)] += w * gc[ch];
        }
        if (gs) {
          for (int s = 0; s < C; ++s) out.sem[v * static_cast<std::size_t>(C) + static_cast<std::size_t>(s)] += w * gs[s];
        }
      }
    }
    if (!options.geometry) continue;

    // dL/db_k from the interpolated attributes.
    std::array<double, 3> dldb{0.0, 0.0, 0.0};
    for (int k = 0; k < 3; ++k) {
      const auto v = static_cast<std::size_t>(face[static_cast<std::size_t>(k)]);
      double acc = 0.0;
      if (gc) {
        for (int ch = 0; ch < 3; ++ch) acc += gc[ch] * g.rgb[v * 3 + static_cast<std::size_t>(ch)];
      }
      if (gs) {
        for (int s = 0; s < C; ++s) acc += gs[s] * g.sem[v * static_cast<std::size_t>(C) + static_cast<std::size_t>(s)];
      }
      dldb[static_cast<std::size_t>(k)] = acc;
    }
    if (dldb[0] == 0.0 && dldb[1] == 0.0 && dldb[2] == 0.0 && gd == 0.0) continue;

    const int row = static_cast<int>(p / static_cast<std::size_t>(W));
    const int col = static_cast<int>(p % static_cast<std::size_t>(W));
    const Vec3 ray = pixel_ray(camera.intrinsics, row, col);
    const std::array<Vec3, 3> P{pc[static_cast<std::size_t>(face[0])], pc[static_cast<std::size_t>(face[1])],
                                pc[static_cast<std::size_t>(face[2])]};
    const std::array<Vec3, 3> N{P[1].cross(P[2]), P[2].cross(P[0]), P[0].cross(P[1])};
    const std::array<double, 3> e{ray.dot(N[0]), ray.dot(N[1]), ray.dot(N[2])};
    const double s = e[0] + e[1] + e[2];
    const double det = P[0].dot(N[0]);
    const double inv_s = 1.0 / s;
    const double weighted = dldb[0] * e[0] + dldb[1] * e[1] + dldb[2] * e[2];
    // b_k = e_k / s and depth = det / s.
    std::array<double, 3> ge{};
    for (int m = 0; m < 3; ++m) {
      ge[static_cast<std::size_t>(m)] = dldb[static_cast<std::size_t>(m)] * inv_s - weighted * inv_s * inv_s - gd * det * inv_s * inv_s;
    }
    const double gdet = gd * inv_s;
    for (int j = 0; j < 3; ++j) {
      const auto jn = static_cast<std::size_t>((j + 1) % 3);
      const auto jp = static_cast<std::size_t>((j + 2) % 3);
      // e_{j-1} depends on P_j through P_{j+1} x r; e_{j+1} through r x P_{j-1}.
      const Vec3 d = ge[jp] * P[jn].cross(ray) + ge[jn] * ray.cross(P[jp]) + gdet * N[static_cast<std::size_t>(j)];
      gcam[static_cast<std::size_t>(face[static_cast<std::size_t>(j)])] += d;
    }
  }

  if (options.geometry) {
    const Mat3 Rwc = cam.rotation.transpose();
    const Vec3 dz_dir = Rwc.col(2);
    const SE3Pose body_to_world = camera.ego * camera.extrinsic;
    const SE3Pose world_to_body = body_to_world.inverse();
    const Vec3& phi = camera.correction.phi;
    Vec3 sum_g = Vec3::Zero();
    for (std::size_t v = 0; v < nv; ++v) {
      const Vec3& gv = gcam[v];
      if (gv.isZero(0.0)) continue;
      out.z[v] = dz_dir.dot(gv);
      // p_cam = R(-phi) (world_to_body p - delta_t)
      const Vec3 r = world_to_body.apply(g.positions[v]) - camera.correction.delta_t;
      out.phi -= rodrigues_point_gradient(-phi, r, gv);
      sum_g += gv;
    }
    out.delta_t = -(rodrigues(phi) * sum_g);
  }
  return out;
}

std::vector<Vec3> unproject_depth(const ImageD& depth, const ImageU8& mask, const SE3Pose& camera_to_world,
                                  const CameraIntrinsics& K) {
  if (!mask.same_shape(depth.width, depth.height)) throw UsageError("unproject_depth: shape mismatch");
  std::vector<Vec3> pts;
  for (int r = 0; r < depth.height; ++r) {
    for (int c = 0; c < depth.width; ++c) {
      if (!mask.at(r, c)) continue;
      pts.push_back(unproject(c + 0.5, r + 0.5, depth.at(r, c), camera_to_world, K));
    }
  }
  return pts;
}

}  // namespace roadmesh
