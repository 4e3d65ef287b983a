#include "i4d/checkpoint.hpp"

#include <cstring>

namespace i4d {

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& bytes, std::size_t& pos) {
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string encode_checkpoint(const GaussianModel<float>& m) {
  std::string out;
  out.reserve(kCheckpointHeaderBytes + kCheckpointRecordBytes * std::size_t(m.size()));
  out.append(kCheckpointMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, std::uint64_t(m.size()));
  put<float>(out, float(m.video_length));
  put<float>(out, float(m.fps));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.mode));
  put<std::uint32_t>(out, 0);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    for (int k = 0; k < 4; ++k) put<float>(out, m.mean(i, k));
    put<float>(out, m.log_scale(i));
    put<float>(out, m.log_scale_t(i));
    put<float>(out, m.opacity_logit(i));
    for (int c = 0; c < 3; ++c) put<float>(out, m.rgb(i, c));
    put<std::uint8_t>(out, m.is_dynamic[std::size_t(i)] ? 1 : 0);
  }
  return out;
}

GaussianModel<float> decode_checkpoint(const std::string& bytes, const std::string& name) {
  if (bytes.size() < kCheckpointHeaderBytes) {
    throw IoError("checkpoint '" + name + "': truncated header (" + std::to_string(bytes.size()) + " of " +
                  std::to_string(kCheckpointHeaderBytes) + " bytes)");
  }
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw IoError("checkpoint '" + name + "': bad magic");
  std::size_t pos = 4;
  const auto version = get<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint '" + name + "': file version " + std::to_string(version) +
                  " is not supported (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = get<std::uint64_t>(bytes, pos);
  GaussianModel<float> m;
  m.video_length = get<float>(bytes, pos);
  m.fps = get<float>(bytes, pos);
  const auto mode = get<std::uint32_t>(bytes, pos);
  if (mode > 1) throw IoError("checkpoint '" + name + "': unknown mode " + std::to_string(mode));
  m.mode = static_cast<InitMode>(mode);
  pos = kCheckpointHeaderBytes;

  const std::size_t available = (bytes.size() - pos) / kCheckpointRecordBytes;
  if (count > available || bytes.size() - pos != count * kCheckpointRecordBytes) {
    throw IoError("checkpoint '" + name + "': header declares " + std::to_string(count) + " records but " +
                  std::to_string(bytes.size() - pos) + " payload bytes follow the header at byte " +
                  std::to_string(pos));
  }
  m.resize(Eigen::Index(count));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    for (int k = 0; k < 4; ++k) m.mean(i, k) = get<float>(bytes, pos);
    m.log_scale(i) = get<float>(bytes, pos);
    m.log_scale_t(i) = get<float>(bytes, pos);
    m.opacity_logit(i) = get<float>(bytes, pos);
    for (int c = 0; c < 3; ++c) m.rgb(i, c) = get<float>(bytes, pos);
    m.is_dynamic[std::size_t(i)] = get<std::uint8_t>(bytes, pos) ? 1 : 0;
  }
  return m;
}

void save_checkpoint(const GaussianModel<float>& model, const std::string& path) {
  write_file(path, encode_checkpoint(model));
}

GaussianModel<float> load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path), path); }

PlyTable model_ply_table(const GaussianModel<float>& m) {
  PlyTable t;
  for (const char* p : {"x", "y", "z", "t", "scale", "scale_t", "opacity", "red", "green", "blue"}) {
    t.properties.push_back({p, PlyType::Float32});
  }
  t.rows.resize(m.size(), 10);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    t.rows.row(i) << m.mean(i, 0), m.mean(i, 1), m.mean(i, 2), m.mean(i, 3), m.scale(i), m.scale_t(i), m.opacity(i),
        m.rgb(i, 0), m.rgb(i, 1), m.rgb(i, 2);
  }
  return t;
}

}  // namespace i4d
