#pragma once

// BasisSpec persistence: versioned little-endian binary ("BCNB") and JSON.

#include <string>
#include <vector>

#include "json.hpp"

#include "bcnn/basis.hpp"
#include "bcnn/binary_io.hpp"

namespace bcnn {

inline constexpr std::uint32_t kBasisFormatVersion = 1;

inline std::vector<std::uint8_t> encode_basis(const BasisSpec& spec) {
    io::ByteWriter w;
    w.magic("BCNB");
    w.u32(kBasisFormatVersion);
    w.i32(spec.filter_size);
    w.f64(spec.radius);
    w.f64(spec.k_max);
    w.u8(static_cast<std::uint8_t>(spec.policy));
    w.i32(spec.nu_max);
    w.i32(spec.j_max);
    w.u32(static_cast<std::uint32_t>(spec.modes.size()));
    for (const Mode& m : spec.modes) {
        w.i32(m.nu);
        w.i32(m.j);
        w.f64(m.k);
        w.f64(m.norm);
    }
    return std::move(w).take();
}

inline BasisSpec decode_basis(const std::vector<std::uint8_t>& bytes) {
    io::ByteReader r(bytes);
    r.expect_magic("BCNB");
    const std::size_t version_at = r.offset();
    const std::uint32_t version = r.u32();
    if (version != kBasisFormatVersion) {
        throw format_error("unsupported basis version " + std::to_string(version), version_at);
    }
    BasisSpec spec;
    spec.filter_size = r.i32();
    spec.radius = r.f64();
    spec.k_max = r.f64();
    const std::size_t policy_at = r.offset();
    const std::uint8_t policy = r.u8();
    if (policy > 1) throw format_error("unknown cutoff policy tag", policy_at);
    spec.policy = static_cast<CutoffPolicy>(policy);
    const int nu_max = r.i32();
    const int j_max = r.i32();
    const std::uint32_t count = r.u32();
    spec.modes.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t at = r.offset();
        Mode m;
        m.nu = r.i32();
        m.j = r.i32();
        m.k = r.f64();
        m.norm = r.f64();
        if (m.nu < 0 || m.j < 0 || !(m.k >= 0.0) || !(m.norm > 0.0)) {
            throw format_error("invalid mode record", at);
        }
        if (!spec.modes.empty()) {
            const Mode& p = spec.modes.back();
            const bool ordered = m.nu == p.nu ? m.j == p.j + 1 : (m.nu == p.nu + 1 && m.j == 0);
            if (!ordered) throw format_error("modes out of lexicographic order", at);
        } else if (m.nu != 0 || m.j != 0) {
            throw format_error("first mode must be (0, 0)", at);
        }
        spec.modes.push_back(m);
    }
    if (!r.at_end()) throw format_error("trailing bytes after basis", r.offset());
    spec.reindex();
    if (spec.nu_max != nu_max || spec.j_max != j_max) {
        throw format_error("nu_max/j_max disagree with the mode list", bytes.size());
    }
    return spec;
}

inline void save_basis(const BasisSpec& spec, const std::string& path) {
    io::write_file(path, encode_basis(spec));
}

inline BasisSpec load_basis(const std::string& path) { return decode_basis(io::read_file(path)); }

/// Stable identifier of a basis: FNV-1a of its binary encoding.
inline std::string basis_hash(const BasisSpec& spec) {
    return io::hex64(io::fnv1a(encode_basis(spec)));
}

inline nlohmann::json basis_to_json(const BasisSpec& spec) {
    nlohmann::json modes = nlohmann::json::array();
    for (const Mode& m : spec.modes) {
        modes.push_back({{"nu", m.nu}, {"j", m.j}, {"k", m.k}, {"norm", m.norm}});
    }
    return {{"format", "BCNB"},
            {"version", kBasisFormatVersion},
            {"filter_size", spec.filter_size},
            {"radius", spec.radius},
            {"k_max", spec.k_max},
            {"cutoff", to_string(spec.policy)},
            {"nu_max", spec.nu_max},
            {"j_max", spec.j_max},
            {"mode_count", spec.modes.size()},
            {"hash", basis_hash(spec)},
            {"modes", modes}};
}

inline BasisSpec basis_from_json(const nlohmann::json& j) {
    try {
        BasisSpec spec;
        spec.filter_size = j.at("filter_size").get<int>();
        spec.radius = j.at("radius").get<double>();
        spec.k_max = j.at("k_max").get<double>();
        spec.policy = parse_cutoff(j.at("cutoff").get<std::string>());
        for (const auto& m : j.at("modes")) {
            spec.modes.push_back({m.at("nu").get<int>(), m.at("j").get<int>(), m.at("k").get<double>(),
                                  m.at("norm").get<double>()});
        }
        spec.reindex();
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("malformed basis JSON: ") + e.what());
    }
}

} // namespace bcnn
