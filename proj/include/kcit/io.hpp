#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "kcit/errors.hpp"
#include "kcit/pipeline.hpp"
#include "kcit/synthetic.hpp"

namespace kcit {

/// Shortest round-trippable decimal form, so CSV bytes are reproducible.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0.0;
    std::sscanf(buf, "%lg", &back);
    if (back == v) {
        for (int prec = 1; prec <= 16; ++prec) {
            char shorter[40];
            std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
            std::sscanf(shorter, "%lg", &back);
            if (back == v) return shorter;
        }
    }
    return buf;
}

inline constexpr const char* kCsvSchemaLine = "# schema=1";

inline std::string dataset_to_csv(const Dataset& ds) {
    std::ostringstream out;
    out << kCsvSchemaLine << "\n";
    out << "a_1,b_1";
    for (Eigen::Index d = 0; d < ds.c.cols(); ++d) out << ",c_" << (d + 1);
    out << "\n";
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
        out << format_double(ds.a(i, 0)) << "," << format_double(ds.b(i, 0));
        for (Eigen::Index d = 0; d < ds.c.cols(); ++d)
            out << "," << format_double(ds.c(i, d));
        out << "\n";
    }
    return out.str();
}

inline Dataset dataset_from_csv(std::istream& in) {
    std::string line;
    std::vector<std::vector<double>> rows;
    int dim_c = -1;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("a_1", 0) == 0) {  // header
            dim_c = static_cast<int>(std::count(line.begin(), line.end(), ',')) - 1;
            continue;
        }
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw config_error("dataset_from_csv: no data rows");
    if (dim_c < 1) dim_c = static_cast<int>(rows[0].size()) - 2;
    if (dim_c < 1) throw config_error("dataset_from_csv: need columns a_1,b_1,c_1..");
    Dataset ds;
    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    ds.a.resize(n, 1);
    ds.b.resize(n, 1);
    ds.c.resize(n, dim_c);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (rows[i].size() != static_cast<std::size_t>(dim_c) + 2)
            throw config_error("dataset_from_csv: ragged row");
        ds.a(i, 0) = rows[i][0];
        ds.b(i, 0) = rows[i][1];
        for (int d = 0; d < dim_c; ++d) ds.c(i, d) = rows[i][2 + d];
    }
    return ds;
}

inline std::string sweep_to_csv(SweepAxis axis, const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << kCsvSchemaLine << "\n";
    out << to_string(axis) << ",rate,std_error,oracle_kci,oracle_var,oracle_snr\n";
    for (const SweepRow& r : rows) {
        out << format_double(r.value) << "," << format_double(r.rate) << ","
            << format_double(r.std_error) << "," << format_double(r.oracle_kci) << ","
            << format_double(r.oracle_var) << "," << format_double(r.oracle_snr) << "\n";
    }
    return out.str();
}

inline std::string snr_curve_to_csv(const std::vector<SnrPoint>& curve) {
    // a trailing dim column appears only for multi-dimensional searches
    bool multi = false;
    for (const SnrPoint& p : curve) multi = multi || p.dim > 0;
    std::ostringstream out;
    out << kCsvSchemaLine << "\n";
    out << (multi ? "lengthscale_sq,snr,u_stat,sigma2,dim\n"
                  : "lengthscale_sq,snr,u_stat,sigma2\n");
    for (const SnrPoint& p : curve) {
        out << format_double(p.ell_sq) << "," << format_double(p.snr) << ","
            << format_double(p.u_stat) << "," << format_double(p.sigma2);
        if (multi) out << "," << p.dim;
        out << "\n";
    }
    return out.str();
}

inline std::string oracle_curve_to_csv(const OracleSnrCurve& curve) {
    std::ostringstream out;
    out << kCsvSchemaLine << "\n";
    out << "lengthscale_sq,kci,var_un,nu1,snr,is_argmax\n";
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
        const OracleSnrPoint& p = curve.points[i];
        out << format_double(p.ell_sq) << "," << format_double(p.kci) << ","
            << format_double(p.var_un) << "," << format_double(p.nu1) << ","
            << format_double(p.snr) << "," << (i == curve.argmax ? 1 : 0) << "\n";
    }
    return out.str();
}

inline void write_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot open for writing: " + path);
    out << contents;
}

}  // namespace kcit
