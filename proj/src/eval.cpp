#include "p2preg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "p2preg/matching.hpp"

namespace p2preg {

double rms_tre(const RigidTransform& t, const std::vector<Vec3>& source_fiducials,
               const std::vector<Vec3>& target_fiducials) {
    if (source_fiducials.size() != target_fiducials.size())
        throw ParameterError("rms_tre: fiducial count mismatch");
    if (source_fiducials.empty()) throw ParameterError("rms_tre: no fiducials");
    double sum = 0.0;
    for (std::size_t i = 0; i < source_fiducials.size(); ++i)
        sum += (target_fiducials[i] - t.apply(source_fiducials[i])).squaredNorm();
    return std::sqrt(sum / static_cast<double>(source_fiducials.size()));
}

ProcrustesReference procrustes_reference(const std::vector<Vec3>& source_fiducials,
                                         const std::vector<Vec3>& target_fiducials) {
    if (source_fiducials.size() != target_fiducials.size())
        throw ParameterError("procrustes_reference: fiducial count mismatch");
    CorrespondenceSet corr;
    for (int i = 0; i < static_cast<int>(source_fiducials.size()); ++i)
        corr.pairs.push_back({i, i, 1.0});
    ProcrustesReference ref;
    ref.transform = weighted_svd(source_fiducials, target_fiducials, corr);
    ref.rms_tre = rms_tre(ref.transform, source_fiducials, target_fiducials);
    return ref;
}

double success_rate(const std::vector<double>& errors, double tau) {
    if (errors.empty()) throw ParameterError("success_rate: no records");
    long below = std::count_if(errors.begin(), errors.end(),
                               [tau](double e) { return e < tau; });
    return 100.0 * static_cast<double>(below) / static_cast<double>(errors.size());
}

std::vector<double> default_visibility_edges() {
    return {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
}

std::vector<BinRow> bin_report(const std::vector<EvalRecord>& records,
                               const std::vector<double>& edges) {
    if (edges.size() < 2) throw ParameterError("bin_report: need at least two bin edges");

    std::vector<std::string> methods;
    for (const EvalRecord& r : records)
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
            methods.push_back(r.method);
    std::sort(methods.begin(), methods.end());

    std::vector<BinRow> rows;
    for (const std::string& method : methods) {
        for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
            BinRow row;
            row.method = method;
            row.lo = edges[b];
            row.hi = edges[b + 1];
            bool last = b + 2 == edges.size();
            std::vector<double> errs;
            double runtime = 0.0;
            for (const EvalRecord& r : records) {
                if (r.method != method) continue;
                bool in = r.visibility >= row.lo &&
                          (last ? r.visibility <= row.hi : r.visibility < row.hi);
                if (!in) continue;
                if (r.failed) {
                    row.failures++;
                    continue;
                }
                errs.push_back(r.rms_tre_mm);
                runtime += r.runtime_s;
            }
            row.count = static_cast<int>(errs.size());
            if (row.count > 0) {
                double sum = 0.0;
                for (double e : errs) sum += e;
                row.mean = sum / row.count;
                double var = 0.0;
                for (double e : errs) var += (e - row.mean) * (e - row.mean);
                row.stddev = row.count > 1 ? std::sqrt(var / (row.count - 1)) : 0.0;
                row.mean_runtime = runtime / row.count;
            }
            rows.push_back(row);
        }
    }
    return rows;
}

void write_bin_report_csv(const std::string& path, const std::vector<BinRow>& rows) {
    std::ofstream out(path);
    if (!out) throw ParameterError("write_bin_report_csv: cannot open " + path);
    out << "method,bin_lo,bin_hi,count,failures,mean_rms_tre_mm,std_rms_tre_mm,mean_runtime_s\n";
    char buf[512];
    for (const BinRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%.3f,%.3f,%d,%d,%.9g,%.9g,%.9g\n",
                      r.method.c_str(), r.lo, r.hi, r.count, r.failures, r.mean, r.stddev,
                      r.mean_runtime);
        out << buf;
    }
}

void write_bin_report_json(const std::string& path, const std::vector<BinRow>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const BinRow& r : rows)
        arr.push_back({{"method", r.method},
                       {"bin_lo", r.lo},
                       {"bin_hi", r.hi},
                       {"count", r.count},
                       {"failures", r.failures},
                       {"mean_rms_tre_mm", r.mean},
                       {"std_rms_tre_mm", r.stddev},
                       {"mean_runtime_s", r.mean_runtime}});
    std::ofstream out(path);
    if (!out) throw ParameterError("write_bin_report_json: cannot open " + path);
    out << arr.dump(2) << "\n";
}

void write_success_rate_csv(const std::string& path, const std::vector<EvalRecord>& records,
                            const std::vector<double>& tau_grid_mm) {
    std::set<std::string> methods;
    for (const EvalRecord& r : records) methods.insert(r.method);

    std::ofstream out(path);
    if (!out) throw ParameterError("write_success_rate_csv: cannot open " + path);
    out << "method,tau_mm,success_rate\n";
    char buf[256];
    for (const std::string& method : methods) {
        std::vector<double> errs;
        for (const EvalRecord& r : records)
            if (r.method == method)
                errs.push_back(r.failed ? std::numeric_limits<double>::infinity()
                                        : r.rms_tre_mm);
        for (double tau : tau_grid_mm) {
            std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g\n", method.c_str(), tau,
                          success_rate(errs, tau));
            out << buf;
        }
    }
}

void write_paired_csv(const std::string& path, const std::vector<EvalRecord>& records) {
    std::set<std::string> methods;
    std::map<std::string, const EvalRecord*> meta;  // sample -> any record
    std::map<std::pair<std::string, std::string>, const EvalRecord*> table;
    for (const EvalRecord& r : records) {
        methods.insert(r.method);
        meta.emplace(r.sample_id, &r);
        table[{r.sample_id, r.method}] = &r;
    }

    std::ofstream out(path);
    if (!out) throw ParameterError("write_paired_csv: cannot open " + path);
    out << "sample,visibility,noise_level_mm,deformation_rms_mm";
    for (const std::string& m : methods) out << "," << m << "_rms_tre_mm";
    out << "\n";
    char buf[256];
    for (const auto& [sample, any] : meta) {
        std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g,%.9g", sample.c_str(), any->visibility,
                      any->noise_level_mm, any->deformation_rms_mm);
        out << buf;
        for (const std::string& m : methods) {
            auto it = table.find({sample, m});
            if (it == table.end() || it->second->failed) {
                out << ",";
            } else {
                std::snprintf(buf, sizeof buf, ",%.9g", it->second->rms_tre_mm);
                out << buf;
            }
        }
        out << "\n";
    }
}

void write_records_json(const std::string& path, const std::vector<EvalRecord>& records) {
    nlohmann::json arr = nlohmann::json::array();
    for (const EvalRecord& r : records)
        arr.push_back({{"sample", r.sample_id},
                       {"method", r.method},
                       {"rms_tre_mm", r.rms_tre_mm},
                       {"runtime_s", r.runtime_s},
                       {"failed", r.failed},
                       {"visibility", r.visibility},
                       {"noise_level_mm", r.noise_level_mm},
                       {"deformation_rms_mm", r.deformation_rms_mm}});
    std::ofstream out(path);
    if (!out) throw ParameterError("write_records_json: cannot open " + path);
    out << arr.dump(2) << "\n";
}

}  // namespace p2preg
