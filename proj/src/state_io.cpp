#include "sentinel/state_io.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

#include "json.hpp"

#include "sentinel/errors.hpp"

namespace sentinel {

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open '" + tmp.string() + "' for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) throw DataError("short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw DataError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
    }
}

std::string state_dict_to_json(const StateDict& sd) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& e : sd) {
        j.push_back({{"name", e.name}, {"rows", e.rows}, {"cols", e.cols}, {"values", e.values}});
    }
    return j.dump(1) + "\n";
}

StateDict state_dict_from_json(const std::string& text) {
    StateDict sd;
    try {
        const auto j = nlohmann::json::parse(text);
        for (const auto& item : j) {
            StateEntry e;
            e.name = item.at("name").get<std::string>();
            e.rows = item.at("rows").get<long>();
            e.cols = item.at("cols").get<long>();
            e.values = item.at("values").get<std::vector<double>>();
            if (static_cast<long>(e.values.size()) != e.rows * e.cols) {
                throw DataError("state entry '" + e.name + "' holds " + std::to_string(e.values.size()) +
                                " values for shape [" + std::to_string(e.rows) + "," + std::to_string(e.cols) + "]");
            }
            sd.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw DataError(std::string("malformed state dictionary: ") + ex.what());
    }
    return sd;
}

void save_state_dict(const StateDict& sd, const std::filesystem::path& path) {
    write_file_atomic(path, state_dict_to_json(sd));
}

StateDict load_state_dict_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return state_dict_from_json(ss.str());
}

}  // namespace sentinel
