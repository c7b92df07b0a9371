#include "sentinel/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "json.hpp"

#include "sentinel/metrics.hpp"

namespace sentinel {

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

std::string rounds_csv(const std::vector<RoundReport>& reports) {
    std::string out =
        "round,client_id,model,accuracy,macro_precision,macro_recall,macro_f1,wall_time_s,lambda_kd_last,"
        "lambda_align_last\n";
    for (const auto& rep : reports) {
        for (const auto& r : rep.rows) {
            out += std::to_string(r.round) + "," + std::to_string(r.client_id) + "," + r.model + "," +
                   num(r.metrics.accuracy) + "," + num(r.metrics.macro_precision) + "," +
                   num(r.metrics.macro_recall) + "," + num(r.metrics.macro_f1) + "," + num(r.wall_time_s) + "," +
                   num(r.lambda_kd_last) + "," + num(r.lambda_align_last) + "\n";
        }
    }
    return out;
}

std::string timing_csv(const std::vector<RoundReport>& reports, const std::vector<double>& injected_delay) {
    std::string out = "round,client_id,measured_s,injected_s,reliable\n";
    for (const auto& rep : reports) {
        for (std::size_t k = 0; k < rep.selected.size(); ++k) {
            const int id = rep.selected[k];
            const double inj = static_cast<std::size_t>(id) < injected_delay.size() ? injected_delay[id] : 0.0;
            const bool ok = std::find(rep.reliable.begin(), rep.reliable.end(), id) != rep.reliable.end();
            out += std::to_string(rep.round) + "," + std::to_string(id) + "," + num(rep.measured_time_s.at(k)) + "," +
                   num(inj) + "," + (ok ? "1" : "0") + "\n";
        }
    }
    return out;
}

std::string trace_csv(const std::vector<RoundReport>& reports) {
    std::string out =
        "round,client_id,epoch,batch,batch_size,task,kd,align,total,temperature,gamma,delta,score_align,lambda_kd,"
        "lambda_align\n";
    for (const auto& rep : reports) {
        for (std::size_t k = 0; k < rep.traces.size(); ++k) {
            for (const auto& b : rep.traces[k]) {
                out += std::to_string(b.round) + "," + std::to_string(rep.selected[k]) + "," + std::to_string(b.epoch) +
                       "," + std::to_string(b.batch) + "," + std::to_string(b.batch_size) + "," + num(b.task) + "," +
                       num(b.kd) + "," + num(b.align) + "," + num(b.total) + "," + num(b.temperature) + "," +
                       num(b.gamma) + "," + num(b.delta) + "," + num(b.score_align) + "," + num(b.lambda_kd) + "," +
                       num(b.lambda_align) + "\n";
            }
        }
    }
    return out;
}

std::string summary_json(const std::vector<RoundReport>& reports, const std::string& variant,
                         long teacher_parameters, long student_parameters) {
    using nlohmann::ordered_json;
    ordered_json j;
    j["variant"] = variant;
    j["teacher_parameters"] = teacher_parameters;
    j["student_parameters"] = student_parameters;
    j["value_width_bytes"] = kValueWidthBytes;
    long down = 0, up = 0;
    ordered_json rounds = ordered_json::array();
    for (const auto& rep : reports) {
        down += rep.downlink_bytes;
        up += rep.uplink_bytes;
        ordered_json r;
        r["round"] = rep.round;
        r["skipped"] = rep.skipped;
        r["selected"] = rep.selected;
        r["reliable"] = rep.reliable;
        r["downlink_bytes"] = rep.downlink_bytes;
        r["uplink_bytes"] = rep.uplink_bytes;
        std::map<std::string, std::map<std::string, std::vector<double>>> by_model;
        std::vector<std::string> order;
        for (const auto& row : rep.rows) {
            if (!by_model.count(row.model)) order.push_back(row.model);
            auto& m = by_model[row.model];
            m["accuracy"].push_back(row.metrics.accuracy);
            m["macro_precision"].push_back(row.metrics.macro_precision);
            m["macro_recall"].push_back(row.metrics.macro_recall);
            m["macro_f1"].push_back(row.metrics.macro_f1);
        }
        ordered_json models = ordered_json::object();
        for (const auto& name : order) {
            ordered_json mj;
            for (const auto* metric : {"accuracy", "macro_precision", "macro_recall", "macro_f1"}) {
                const auto [mean, sd] = mean_std(by_model[name][metric]);
                mj[metric] = {{"mean", mean}, {"std", sd}};
            }
            models[name] = mj;
        }
        r["models"] = models;
        rounds.push_back(r);
    }
    j["total_downlink_bytes"] = down;
    j["total_uplink_bytes"] = up;
    j["rounds"] = rounds;
    return j.dump(2) + "\n";
}

}  // namespace sentinel
