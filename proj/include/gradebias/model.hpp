#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include "json.hpp"

#include "gradebias/accumulators.hpp"
#include "gradebias/dataset.hpp"
#include "gradebias/error.hpp"
#include "gradebias/linalg.hpp"

namespace gradebias {

enum class InitDistribution { gaussian, uniform };

struct InitSpec {
    InitDistribution distribution = InitDistribution::gaussian;
    /// Standard deviation (gaussian) or half-width (uniform).
    double scale = 0.1;
    std::uint64_t seed = 2023;
};

inline const char* to_string(InitDistribution d) { return d == InitDistribution::gaussian ? "gaussian" : "uniform"; }

inline InitDistribution parse_distribution(std::string_view s) {
    if (s == "gaussian") return InitDistribution::gaussian;
    if (s == "uniform") return InitDistribution::uniform;
    throw ConfigError("unknown init distribution '" + std::string(s) + "'");
}

/// User and item embedding tables. Scoring is the inner product, optionally
/// with the user vector scaled to unit length.
struct EmbeddingModel {
    Matrix users;
    Matrix items;
    bool normalize_users = false;
    InitSpec init;

    std::size_t dim() const noexcept { return users.cols(); }
    std::size_t num_users() const noexcept { return users.rows(); }
    std::size_t num_items() const noexcept { return items.rows(); }
};

inline void fill_random(Matrix& m, const InitSpec& spec, std::mt19937_64& rng) {
    if (spec.scale == 0.0) return;
    if (spec.distribution == InitDistribution::gaussian) {
        std::normal_distribution<double> dist(0.0, spec.scale);
        for (double& x : m.data()) x = dist(rng);
    } else {
        std::uniform_real_distribution<double> dist(-spec.scale, spec.scale);
        for (double& x : m.data()) x = dist(rng);
    }
}

inline EmbeddingModel init_model(std::size_t num_users, std::size_t num_items, std::size_t dim,
                                 const InitSpec& spec = {}) {
    if (dim == 0) throw ConfigError("embedding dimension must be at least 1");
    if (num_users == 0 || num_items == 0) throw ConfigError("model needs at least one user and one item");
    if (!(spec.scale >= 0.0) || !std::isfinite(spec.scale)) throw ConfigError("init scale must be finite and >= 0");
    EmbeddingModel m;
    m.users = Matrix(num_users, dim);
    m.items = Matrix(num_items, dim);
    m.init = spec;
    std::mt19937_64 rng(spec.seed);
    fill_random(m.users, spec, rng);
    fill_random(m.items, spec, rng);
    return m;
}

namespace detail {

inline void check_user(const EmbeddingModel& m, std::size_t u) {
    if (u >= m.num_users())
        throw IndexError("user " + std::to_string(u) + " out of range [0," + std::to_string(m.num_users()) + ")");
}

inline void check_item(const EmbeddingModel& m, std::size_t i) {
    if (i >= m.num_items())
        throw IndexError("item " + std::to_string(i) + " out of range [0," + std::to_string(m.num_items()) + ")");
}

}  // namespace detail

/// The user vector actually used for scoring: P_u, or P_u/|P_u| when
/// normalization is on (zero vectors stay zero).
inline Vector scoring_user_vector(const EmbeddingModel& m, std::size_t u) {
    detail::check_user(m, u);
    return m.normalize_users ? normalized(m.users.row(u)) : to_vector(m.users.row(u));
}

inline double score(const EmbeddingModel& m, std::size_t u, std::size_t i) {
    detail::check_user(m, u);
    detail::check_item(m, i);
    if (!m.normalize_users) return dot(m.users.row(u), m.items.row(i));
    const double n = norm2(m.users.row(u));
    if (n == 0.0) return 0.0;
    return dot(normalized(m.users.row(u)), m.items.row(i));
}

// ---------------------------------------------------------------------------
// Checkpoints: a directory holding manifest.json plus raw little-endian
// float64 row-major payloads.

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    EmbeddingModel model;
    std::optional<GradientAccumulators> accumulators;
    /// Flat training configuration (key -> value text), kept for provenance.
    std::map<std::string, std::string> train_config;
    /// External ids in index order; null when the checkpoint has none.
    std::shared_ptr<const IdMaps> ids;
};

/// FNV-1a over "key=value\n" lines in key order.
inline std::string config_hash(const std::map<std::string, std::string>& cfg) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& [k, v] : cfg) {
        for (char c : k + "=" + v + "\n") {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace detail {

inline std::uint64_t byteswap64(std::uint64_t x) {
    std::uint64_t r = 0;
    for (int k = 0; k < 8; ++k) r = (r << 8) | ((x >> (8 * k)) & 0xffU);
    return r;
}

inline void write_matrix(const std::filesystem::path& path, const Matrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(m.data().data()),
                  static_cast<std::streamsize>(m.data().size() * sizeof(double)));
    } else {
        for (double x : m.data()) {
            auto bits = byteswap64(std::bit_cast<std::uint64_t>(x));
            out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
        }
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline Matrix read_matrix(const std::filesystem::path& path, std::size_t rows, std::size_t cols) {
    const std::string field = path.filename().string();
    std::error_code ec;
    const auto bytes = std::filesystem::file_size(path, ec);
    if (ec) throw CheckpointError(field, "missing payload");
    const std::uintmax_t expected = static_cast<std::uintmax_t>(rows) * cols * sizeof(double);
    if (bytes != expected)
        throw CheckpointError(field, "size mismatch: expected " + std::to_string(expected) + " bytes, found " +
                                         std::to_string(bytes));
    Matrix m(rows, cols);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(field, "cannot open payload");
    in.read(reinterpret_cast<char*>(m.data().data()), static_cast<std::streamsize>(expected));
    if (!in) throw CheckpointError(field, "short read");
    if constexpr (std::endian::native != std::endian::little) {
        for (double& x : m.data()) x = std::bit_cast<double>(byteswap64(std::bit_cast<std::uint64_t>(x)));
    }
    if (!m.all_finite()) throw CheckpointError(field, "corrupted payload: non-finite value");
    return m;
}

template <typename T>
T manifest_get(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw CheckpointError(key, "missing from manifest");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw CheckpointError(key, "wrong type in manifest");
    }
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
    const auto& m = ck.model;

    nlohmann::json j;
    j["format"] = "gradebias-checkpoint";
    j["version"] = kCheckpointVersion;
    j["dim"] = m.dim();
    j["num_users"] = m.num_users();
    j["num_items"] = m.num_items();
    j["normalize_users"] = m.normalize_users;
    j["init"] = {{"distribution", to_string(m.init.distribution)},
                 {"scale", m.init.scale},
                 {"seed", m.init.seed}};
    j["train_config"] = ck.train_config;
    j["config_hash"] = config_hash(ck.train_config);
    j["has_accumulators"] = ck.accumulators.has_value();
    j["has_ids"] = static_cast<bool>(ck.ids);

    detail::write_matrix(dir / "user_vectors.bin", m.users);
    detail::write_matrix(dir / "item_vectors.bin", m.items);
    if (ck.accumulators) {
        const auto& a = *ck.accumulators;
        detail::write_matrix(dir / "accum_user.bin", a.user_acc);
        detail::write_matrix(dir / "accum_item.bin", a.item_acc);
        detail::write_matrix(dir / "accum_item_pos.bin", a.item_pos_acc);
        detail::write_matrix(dir / "accum_item_neg.bin", a.item_neg_acc);
    }
    if (ck.ids) {
        write_id_list((dir / "users.tsv").string(), ck.ids->users);
        write_id_list((dir / "items.tsv").string(), ck.ids->items);
    }
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw IoError("cannot write manifest in '" + dir.string() + "'");
    out << j.dump(2) << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw CheckpointError("manifest.json", "cannot open in '" + dir.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("manifest.json", std::string("malformed: ") + e.what());
    }
    const int version = detail::manifest_get<int>(j, "version");
    if (version != kCheckpointVersion)
        throw CheckpointError("version", "unsupported version " + std::to_string(version));
    const auto dim = detail::manifest_get<std::size_t>(j, "dim");
    const auto nu = detail::manifest_get<std::size_t>(j, "num_users");
    const auto ni = detail::manifest_get<std::size_t>(j, "num_items");
    if (dim == 0) throw CheckpointError("dim", "must be positive");

    Checkpoint ck;
    ck.model.normalize_users = detail::manifest_get<bool>(j, "normalize_users");
    const auto init = detail::manifest_get<nlohmann::json>(j, "init");
    ck.model.init.distribution = parse_distribution(detail::manifest_get<std::string>(init, "distribution"));
    ck.model.init.scale = detail::manifest_get<double>(init, "scale");
    ck.model.init.seed = detail::manifest_get<std::uint64_t>(init, "seed");
    ck.train_config = detail::manifest_get<std::map<std::string, std::string>>(j, "train_config");
    if (detail::manifest_get<std::string>(j, "config_hash") != config_hash(ck.train_config))
        throw CheckpointError("config_hash", "does not match train_config");

    ck.model.users = detail::read_matrix(dir / "user_vectors.bin", nu, dim);
    ck.model.items = detail::read_matrix(dir / "item_vectors.bin", ni, dim);
    if (detail::manifest_get<bool>(j, "has_accumulators")) {
        GradientAccumulators a;
        a.user_acc = detail::read_matrix(dir / "accum_user.bin", nu, dim);
        a.item_acc = detail::read_matrix(dir / "accum_item.bin", ni, dim);
        a.item_pos_acc = detail::read_matrix(dir / "accum_item_pos.bin", ni, dim);
        a.item_neg_acc = detail::read_matrix(dir / "accum_item_neg.bin", ni, dim);
        ck.accumulators = std::move(a);
    }
    if (detail::manifest_get<bool>(j, "has_ids")) {
        auto ids = std::make_shared<IdMaps>();
        ids->users = read_id_list((dir / "users.tsv").string());
        ids->items = read_id_list((dir / "items.tsv").string());
        if (ids->users.size() != nu) throw CheckpointError("users.tsv", "id count does not match num_users");
        if (ids->items.size() != ni) throw CheckpointError("items.tsv", "id count does not match num_items");
        ck.ids = std::move(ids);
    }
    return ck;
}

}  // namespace gradebias
