#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "roadmesh/checkpoint.hpp"
#include "roadmesh/error.hpp"

using namespace roadmesh;
namespace fs = std::filesystem;

namespace {

ModelState sample_model() {
  RoadMesh mesh = init_grid({0, 0, 4, 3}, 0.5, 3);
  for (std::size_t i = 0; i < mesh.vertex_rgb.size(); ++i) mesh.vertex_rgb[i] = 0.001 * static_cast<double>(i % 997);
  for (std::size_t i = 0; i < mesh.vertex_sem.size(); ++i) mesh.vertex_sem[i] = std::sin(static_cast<double>(i));
  PositionalEncoding pe;
  pe.num_freqs = 2;
  pe.bounds = mesh.bounds;
  ElevationField field(pe, MlpConfig{2, 8}, 5);
  field.bias(2)(0) = 0.125;
  ModelState m{std::move(mesh), std::move(field), {"front", "left"}, std::vector<ExtrinsicCorrection>(2)};
  m.corrections[1].phi = Vec3(1e-4, -2e-4, 3e-4);
  m.corrections[1].delta_t = Vec3(0.01, 0.02, -0.03);
  m.refresh_elevation();
  return m;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("roadmesh_test_ckpt_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Checkpoint, RoundTrip) {
  const ModelState m = sample_model();
  const fs::path dir = temp_dir("rt");
  save_checkpoint(dir, m, {{"seed", 3}});
  const ModelState back = load_checkpoint(dir);
  EXPECT_EQ(back.mesh.vertex_rgb, m.mesh.vertex_rgb);
  EXPECT_EQ(back.mesh.vertex_sem, m.mesh.vertex_sem);
  EXPECT_EQ(back.mesh.vertex_z, m.mesh.vertex_z);
  EXPECT_EQ(back.mesh.vertex_xy, m.mesh.vertex_xy);
  EXPECT_EQ(back.mesh.faces, m.mesh.faces);
  EXPECT_EQ(back.camera_ids, m.camera_ids);
  EXPECT_EQ(back.corrections[1].phi, m.corrections[1].phi);
  EXPECT_EQ(back.corrections[1].delta_t, m.corrections[1].delta_t);
  EXPECT_EQ(back.field.parameter_count(), m.field.parameter_count());
  EXPECT_EQ(load_checkpoint_config(dir).at("seed"), 3);
}

TEST(Checkpoint, RepeatedSaveIsByteIdentical) {
  const ModelState m = sample_model();
  const fs::path a = temp_dir("a"), b = temp_dir("b");
  save_checkpoint(a, m, {{"x", 1}});
  save_checkpoint(b, m, {{"x", 1}});
  for (const char* f : {"mesh.bin", "field.bin", "corrections.json", "config.json"}) {
    std::ifstream fa(a / f, std::ios::binary), fb(b / f, std::ios::binary);
    EXPECT_TRUE(std::equal(std::istreambuf_iterator<char>(fa), {}, std::istreambuf_iterator<char>(fb))) << f;
  }
}

TEST(Checkpoint, MissingOrCorrupt) {
  EXPECT_THROW(load_checkpoint(temp_dir("nothing")), DataError);
  const fs::path dir = temp_dir("corrupt");
  save_checkpoint(dir, sample_model(), {});
  fs::resize_file(dir / "mesh.bin", fs::file_size(dir / "mesh.bin") - 8);
  EXPECT_THROW(load_checkpoint(dir), DataError);
  save_checkpoint(dir, sample_model(), {});
  fs::remove(dir / "field.bin");
  EXPECT_THROW(load_checkpoint(dir), DataError);
  save_checkpoint(dir, sample_model(), {});
  std::ofstream(dir / "mesh.bin", std::ios::binary) << "NOTAMESH";
  EXPECT_THROW(load_checkpoint(dir), DataError);
}
