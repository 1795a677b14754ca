#include "qlc.h"

#include <cstring>
#include <new>
#include <string>

#include <nlohmann/json.hpp>

#include "qlc/efc.hpp"
#include "qlc/errors.hpp"
#include "qlc/runner.hpp"
#include "qlc/version.hpp"

namespace {

thread_local std::string g_last_error = "ok";

qlc_status status_of(const qlc::error& e) {
  switch (e.code()) {
    case qlc::errc::invalid: return QLC_ERR_INVALID;
    case qlc::errc::domain: return QLC_ERR_DOMAIN;
    case qlc::errc::numeric: return QLC_ERR_NUMERIC;
    case qlc::errc::io: return QLC_ERR_IO;
    case qlc::errc::internal: return QLC_ERR_INTERNAL;
  }
  return QLC_ERR_INTERNAL;
}

template <typename Fn>
qlc_status guarded(Fn&& fn) {
  try {
    fn();
    return QLC_OK;
  } catch (const qlc::error& e) {
    g_last_error = e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return QLC_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return QLC_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = new (std::nothrow) char[s.size() + 1];
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

struct qlc_family {
  qlc::Family impl;
};

extern "C" {

const char* qlc_version(void) { return qlc::kVersion; }

const char* qlc_last_error(void) { return g_last_error.c_str(); }

qlc_status qlc_family_create(const char* token, qlc_family** out) {
  if (!token || !out) {
    g_last_error = "qlc_family_create: NULL argument";
    return QLC_ERR_INVALID;
  }
  *out = nullptr;
  return guarded([&] { *out = new qlc_family{qlc::Family::parse(token)}; });
}

void qlc_family_destroy(qlc_family* family) { delete family; }

qlc_status qlc_family_log_partition(const qlc_family* family, double u, double* out) {
  if (!family || !out) {
    g_last_error = "qlc_family_log_partition: NULL argument";
    return QLC_ERR_INVALID;
  }
  return guarded([&] { *out = family->impl.log_partition(u); });
}

qlc_status qlc_family_mean(const qlc_family* family, double u, double* out) {
  if (!family || !out) {
    g_last_error = "qlc_family_mean: NULL argument";
    return QLC_ERR_INVALID;
  }
  return guarded([&] { *out = family->impl.mean_value(u); });
}

qlc_status qlc_family_centered_cumulant(const qlc_family* family, double u, double t,
                                        double* out) {
  if (!family || !out) {
    g_last_error = "qlc_family_centered_cumulant: NULL argument";
    return QLC_ERR_INVALID;
  }
  return guarded([&] { *out = family->impl.centered_cumulant(u, t); });
}

qlc_status qlc_family_subgaussian_scale(const qlc_family* family, double u, double lambda1_star,
                                        double* out) {
  if (!family || !out) {
    g_last_error = "qlc_family_subgaussian_scale: NULL argument";
    return QLC_ERR_INVALID;
  }
  return guarded([&] { *out = family->impl.subgaussian_scale(u, lambda1_star); });
}

qlc_status qlc_run(const char* command, const char* config_json, int workers, char** out_json) {
  if (!command || !config_json || !out_json) {
    g_last_error = "qlc_run: NULL argument";
    return QLC_ERR_INVALID;
  }
  *out_json = nullptr;
  return guarded([&] {
    nlohmann::json config;
    try {
      config = nlohmann::json::parse(config_json);
    } catch (const nlohmann::json::parse_error& e) {
      throw qlc::config_error(std::string("config JSON parse error: ") + e.what());
    }
    const qlc::RunOutput run = qlc::run_command(command, config, workers);
    nlohmann::json artifacts = nlohmann::json::object();
    for (const auto& [name, content] : run.artifacts) artifacts[name] = content;
    const nlohmann::json payload = {{"report", run.report}, {"artifacts", artifacts}};
    *out_json = dup_string(payload.dump(2));
    if (!*out_json) throw qlc::error(qlc::errc::internal, "out of memory");
  });
}

void qlc_string_free(char* s) { delete[] s; }

}  // extern "C"
