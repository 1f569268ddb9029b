#include "blocklin/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace blocklin {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

void Config::validate() const {
    gemm.validate();
    tri.validate();
    chol.validate();
}

Config parse_config(std::string_view text) {
    Config cfg;
    const std::map<std::string_view, std::size_t*> fields {
        {"wpt", &cfg.gemm.wpt},
        {"tile", &cfg.gemm.tile},
        {"split_s", &cfg.gemm.split_s},
        {"offload_min_nm", &cfg.gemm.offload_min_nm},
        {"offload_min_k", &cfg.gemm.offload_min_k},
        {"wg_vec", &cfg.gemm.wg_vec},
        {"diag_block", &cfg.tri.diag_block},
        {"tri_offload_min_n", &cfg.tri.offload_min_n},
        {"chol_partition", &cfg.chol.partition},
        {"chol_min_l11", &cfg.chol.min_l11},
        {"chol_grad_block", &cfg.chol.grad_block},
        {"chol_offload_min_n", &cfg.chol.offload_min_n},
    };
    std::set<std::string_view> seen;

    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto eol = text.find('\n');
        std::string_view line = text.substr(0, eol);
        text = eol == std::string_view::npos ? std::string_view {} : text.substr(eol + 1);

        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const std::string where = "config line " + std::to_string(line_no) + ": ";
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(where + "expected key = value");
        }
        const std::string_view key = trim(line.substr(0, eq));
        const std::string_view value = trim(line.substr(eq + 1));
        const auto field = fields.find(key);
        if (field == fields.end()) {
            throw ConfigError(where + "unknown key '" + std::string(key) + "'");
        }
        if (!seen.insert(field->first).second) {
            throw ConfigError(where + "key '" + std::string(key) + "' given twice");
        }
        std::size_t v = 0;
        const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
        if (ec != std::errc() || end != value.data() + value.size() || value.empty()) {
            throw ConfigError(where + "'" + std::string(value) + "' is not a non-negative integer");
        }
        *field->second = v;
    }

    cfg.chol.gemm = cfg.gemm;
    cfg.chol.tri = cfg.tri;
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace blocklin
