// qlc: command-line front end over the shared-library C API.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qlc.h"

namespace {

using json = nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct CommonOpts {
  std::string config_path;
  std::string data_path;
  std::string out_dir = "out";
  int threads = 0;
  std::optional<long> seed;
  std::optional<long> reps;
  std::optional<double> rho;
  std::optional<double> eps;
};

void emit_error(int code, const std::string& kind, const std::string& message) {
  const json err = {{"error", {{"code", code}, {"kind", kind}, {"message", message}}}};
  std::cerr << err.dump() << "\n";
}

int status_to_exit(qlc_status status) {
  switch (status) {
    case QLC_OK: return kExitOk;
    case QLC_ERR_INVALID:
    case QLC_ERR_IO: return kExitConfig;
    default: return kExitNumeric;
  }
}

std::string kind_of(qlc_status status) {
  switch (status) {
    case QLC_ERR_INVALID: return "config";
    case QLC_ERR_IO: return "io";
    case QLC_ERR_DOMAIN: return "domain";
    case QLC_ERR_NUMERIC: return "numeric";
    default: return "internal";
  }
}

int run_one(const std::string& command, const CommonOpts& opts) {
  json config = json::object();
  if (!opts.config_path.empty()) {
    std::ifstream in(opts.config_path);
    if (!in) {
      emit_error(kExitConfig, "io", "cannot open config file: " + opts.config_path);
      return kExitConfig;
    }
    try {
      in >> config;
    } catch (const std::exception& e) {
      emit_error(kExitConfig, "config", std::string("config parse error: ") + e.what());
      return kExitConfig;
    }
  }

  // flag overrides for scalar config fields
  if (!opts.data_path.empty()) config["model"]["data"] = opts.data_path;
  if (opts.seed) config["master_seed"] = *opts.seed;
  if (opts.reps) config["reps"] = *opts.reps;
  if (opts.rho) {
    if (command == "bounds")
      config["rho"] = *opts.rho;
    else
      config["rho_grid"] = json::array({*opts.rho});
  }
  if (opts.eps) {
    if (command == "bounds" || command == "entropy")
      config["eps"] = *opts.eps;
    else if (config.contains("penalty"))
      config["penalty"]["eps"] = *opts.eps;
  }

  char* payload_cstr = nullptr;
  const qlc_status status =
      qlc_run(command.c_str(), config.dump().c_str(), opts.threads, &payload_cstr);
  if (status != QLC_OK) {
    emit_error(status_to_exit(status), kind_of(status), qlc_last_error());
    return status_to_exit(status);
  }
  const json payload = json::parse(payload_cstr);
  qlc_string_free(payload_cstr);

  std::filesystem::create_directories(opts.out_dir);
  const std::string report_path = opts.out_dir + "/" + command + ".json";
  {
    std::ofstream out(report_path, std::ios::binary);
    if (!out) {
      emit_error(kExitConfig, "io", "output directory not writable: " + opts.out_dir);
      return kExitConfig;
    }
    out << payload.at("report").dump(2) << "\n";
  }
  for (auto it = payload.at("artifacts").begin(); it != payload.at("artifacts").end(); ++it) {
    std::ofstream out(opts.out_dir + "/" + it.key(), std::ios::binary);
    out << it.value().get<std::string>();
  }

  std::cout << "wrote " << report_path << "\n";
  const json& report = payload.at("report");
  if (command == "verify") {
    const bool passed = report.value("passed", false);
    std::cout << (passed ? "verify: all checks passed" : "verify: BOUND VIOLATIONS FOUND")
              << "\n";
    if (!passed) return kExitNumeric;
  } else if (!report.value("numeric_ok", true)) {
    emit_error(kExitNumeric, "numeric", "numerical failure; see " + report_path);
    return kExitNumeric;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qlc: quasi-likelihood concentration toolkit"};
  app.name("qlc");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(qlc_version()));
  app.footer("Exit codes: 0 ok, 2 config error, 3 numerical failure.\n"
             "QLC_THREADS overrides the worker pool size.");

  CommonOpts opts;
  const struct {
    const char* name;
    const char* help;
  } commands[] = {
      {"fit", "Fit a quasi-MLE to data"},
      {"target", "Solve for the target parameter theta0"},
      {"rate", "Evaluate the rate function at given points"},
      {"bounds", "Assemble exponential-bound constants"},
      {"entropy", "Local covering numbers and entropy of a matrix-field metric"},
      {"simulate", "Seeded Monte Carlo experiment"},
      {"verify", "Run a scenario and test every bound against empirical frequencies"},
  };
  for (const auto& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", opts.config_path, "JSON config file");
    sub->add_option("--data", opts.data_path, "CSV data file (overrides model.data)");
    sub->add_option("--out", opts.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--threads", opts.threads, "Worker pool size (0 = auto)");
    sub->add_option("--seed", [&opts](const std::vector<std::string>& v) {
      opts.seed = std::stol(v[0]);
      return true;
    }, "Override master_seed");
    sub->add_option("--reps", [&opts](const std::vector<std::string>& v) {
      opts.reps = std::stol(v[0]);
      return true;
    }, "Override replication count");
    sub->add_option("--rho", [&opts](const std::vector<std::string>& v) {
      opts.rho = std::stod(v[0]);
      return true;
    }, "Override rho (collapses rho_grid)");
    sub->add_option("--eps", [&opts](const std::vector<std::string>& v) {
      opts.eps = std::stod(v[0]);
      return true;
    }, "Override eps");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run_one(command, opts);
  } catch (const std::exception& e) {
    emit_error(kExitConfig, "internal", e.what());
    return kExitConfig;
  }
}
