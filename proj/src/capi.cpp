#include "tfrelay/tfrelay.h"

#include <cstdio>
#include <memory>
#include <set>
#include <string>

#include "tfrelay/adversary.hpp"
#include "tfrelay/config.hpp"
#include "tfrelay/protocol.hpp"
#include "tfrelay/ratemodel.hpp"
#include "tfrelay/wire.hpp"

using namespace tfrelay;

struct tfr_scenario {
  Topology topology;
  ProtocolVariant variant;
  std::size_t n = 128;
  std::uint64_t seed = 1;
};

struct tfr_trace {
  ProtocolTrace trace;
};

struct tfr_text {
  std::string value;
};

namespace {

thread_local std::string g_last_error;

tfr_status fail(tfr_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

tfr_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::LimitExceeded: return TFR_LIMIT_EXCEEDED;
    case ErrorCode::Io: return TFR_IO_ERROR;
    default: return TFR_INVALID_ARGUMENT;
  }
}

// Runs `body`, translating exceptions into status codes.
template <typename F>
tfr_status guarded(F&& body) {
  try {
    g_last_error.clear();
    return body();
  } catch (const Error& e) {
    return fail(status_of(e.code()), e.what());
  } catch (const std::exception& e) {
    return fail(TFR_INTERNAL, e.what());
  } catch (...) {
    return fail(TFR_INTERNAL, "unknown failure");
  }
}

void give(tfr_text** out, std::string value) {
  if (out) *out = new tfr_text{std::move(value)};
}

SymbolicExpr target_of(const ProtocolTrace& trace, const char* target) {
  if (!target || !*target || std::string_view(target) == "key") return trace.final_key();
  return SymbolicExpr::parse(target);
}

tfr_verdict verdict_of(OracleVerdict v) {
  switch (v) {
    case OracleVerdict::Secure: return TFR_VERDICT_SECURE;
    case OracleVerdict::Broken: return TFR_VERDICT_BROKEN;
    case OracleVerdict::Partial: return TFR_VERDICT_PARTIAL;
  }
  return TFR_VERDICT_PARTIAL;
}

const char* verdict_name(tfr_verdict v) {
  switch (v) {
    case TFR_VERDICT_SECURE: return "SECURE";
    case TFR_VERDICT_BROKEN: return "BROKEN";
    case TFR_VERDICT_PARTIAL: return "PARTIAL";
  }
  return "?";
}

std::string describe_recovery(const ProtocolTrace& trace, const Recovery& r) {
  std::string out;
  for (int m : r.messages) {
    if (!out.empty()) out += " + ";
    out += "M" + std::to_string(trace.messages.at(static_cast<std::size_t>(m)).index);
  }
  for (const auto& id : r.known_secrets) {
    if (!out.empty()) out += " + ";
    out += id.name();
  }
  return out.empty() ? "0" : out;
}

const std::set<std::string>& scenario_keys() {
  static const std::set<std::string> keys{"shape", "m",       "paths", "t",
                                          "link_length_km", "variant", "n",     "seed"};
  return keys;
}

}  // namespace

extern "C" {

const char* tfr_version(void) { return "0.1.0"; }

const char* tfr_last_error(void) { return g_last_error.c_str(); }

const char* tfr_status_name(tfr_status status) {
  switch (status) {
    case TFR_OK: return "OK";
    case TFR_SECURE: return "SECURE";
    case TFR_PROTOCOL_ABORT: return "PROTOCOL_ABORT";
    case TFR_INVALID_ARGUMENT: return "INVALID_ARGUMENT";
    case TFR_LIMIT_EXCEEDED: return "LIMIT_EXCEEDED";
    case TFR_IO_ERROR: return "IO_ERROR";
    case TFR_INTERNAL: return "INTERNAL";
  }
  return "UNKNOWN";
}

const char* tfr_text_data(const tfr_text* text) { return text ? text->value.c_str() : ""; }
size_t tfr_text_size(const tfr_text* text) { return text ? text->value.size() : 0; }
void tfr_text_free(tfr_text* text) { delete text; }

tfr_status tfr_scenario_from_config(const char* text, tfr_scenario** out) {
  if (!text || !out) return fail(TFR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    Config config = Config::parse(text);
    for (const auto& [key, value] : config.entries()) {
      if (!scenario_keys().count(key)) {
        throw Error(ErrorCode::Parse, "unknown scenario key '" + key + "'");
      }
    }
    auto s = std::make_unique<tfr_scenario>();
    s->topology = Topology::from_config(config);
    if (auto v = config.get("variant")) {
      s->variant = ProtocolVariant::parse(*v, s->topology);
    } else {
      s->variant = ProtocolVariant::default_for(s->topology);
    }
    s->variant.check_compatible(s->topology);
    if (auto n = config.get_int("n")) {
      if (*n < 1) throw Error(ErrorCode::Precondition, "n must be >= 1");
      s->n = static_cast<std::size_t>(*n);
    }
    if (auto seed = config.get_int("seed")) {
      if (*seed < 0) throw Error(ErrorCode::Precondition, "seed must be non-negative");
      s->seed = static_cast<std::uint64_t>(*seed);
    }
    *out = s.release();
    return TFR_OK;
  });
}

void tfr_scenario_free(tfr_scenario* scenario) { delete scenario; }

tfr_status tfr_scenario_describe(const tfr_scenario* s, tfr_text** out) {
  if (!s || !out) return fail(TFR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    Config config = s->topology.to_config();
    config.set("variant", s->variant.name());
    config.set("n", std::to_string(s->n));
    config.set("seed", std::to_string(s->seed));
    give(out, config.emit());
    return TFR_OK;
  });
}

tfr_status tfr_simulate(const tfr_scenario* s, tfr_trace** out) {
  if (!s || !out) return fail(TFR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    *out = new tfr_trace{run_protocol(s->topology, s->variant, s->n, s->seed)};
    return TFR_OK;
  });
}

void tfr_trace_free(tfr_trace* trace) { delete trace; }

tfr_status tfr_trace_export(const tfr_trace* t, tfr_format format, tfr_text** out) {
  if (!t || !out) return fail(TFR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    if (format == TFR_FORMAT_TEXT) {
      give(out, t->trace.to_text());
    } else if (format == TFR_FORMAT_JSON) {
      give(out, t->trace.to_json());
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown trace format");
    }
    return TFR_OK;
  });
}

size_t tfr_trace_message_count(const tfr_trace* t) { return t ? t->trace.messages.size() : 0; }

int tfr_trace_outputs_agree(const tfr_trace* t) {
  if (!t) return 0;
  return t->trace.outputs_agree() && t->trace.output_a == eval(t->trace.final_key(), t->trace.keys);
}

tfr_status tfr_trace_output_hex(const tfr_trace* t, char endpoint, tfr_text** out) {
  if (!t || !out) return fail(TFR_INVALID_ARGUMENT, "null argument");
  if (endpoint == 'A') {
    give(out, t->trace.output_a.to_hex());
  } else if (endpoint == 'B') {
    give(out, t->trace.output_b.to_hex());
  } else {
    return fail(TFR_INVALID_ARGUMENT, "endpoint must be 'A' or 'B'");
  }
  return TFR_OK;
}

tfr_status tfr_analyze_coalition(const tfr_scenario* s, const char* coalition, const char* target,
                                 int collaborating, int with_oracle, tfr_coalition_result* result,
                                 tfr_text** report) {
  if (!s || !result) return fail(TFR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const ProtocolTrace trace = run_protocol(s->topology, s->variant, s->n, s->seed);
    const Coalition c = Coalition::parse(coalition ? coalition : "", collaborating != 0);
    const SymbolicExpr goal = target_of(trace, target);
    const SecrecyVerdict v = assess(trace, c, goal);

    *result = {};
    result->verdict = v.broken() ? TFR_VERDICT_BROKEN : TFR_VERDICT_SECURE;
    result->degenerate = v.degenerate ? 1 : 0;
    std::string text = "coalition " + c.to_string() +
                       (c.collaborating ? "" : " (members working alone)") + " target " +
                       goal.to_string() + ": " + verdict_name(result->verdict) + "\n";
    if (v.degenerate) text += "  note: the coalition contains an endpoint\n";
    if (v.recovery) {
      text += "  recovery: " + goal.to_string() + " = " + describe_recovery(trace, *v.recovery) +
              "\n";
    }
    if (with_oracle) {
      const ProtocolTrace small = run_protocol(s->topology, s->variant, 1, s->seed);
      OracleVerdict o;
      if (c.collaborating || c.members.size() <= 1) {
        o = brute_force_secrecy(small, c, goal);
      } else {
        o = OracleVerdict::Secure;
        for (const auto& p : c.members) {
          if (brute_force_secrecy(small, Coalition{{p}, true}, goal) != OracleVerdict::Secure) {
            o = brute_force_secrecy(small, Coalition{{p}, true}, goal);
            break;
          }
        }
      }
      result->oracle_run = 1;
      result->oracle = verdict_of(o);
      const bool agree = result->oracle == result->verdict;
      text += std::string("  oracle (n=1 brute force): ") + verdict_name(result->oracle) +
              (agree ? ", agrees" : ", DISAGREES") + "\n";
      if (!agree) {
        give(report, text);
        return fail(TFR_INTERNAL, "analyzer and oracle disagree on " + c.to_string());
      }
    }
    give(report, text);
    return TFR_OK;
  });
}

tfr_status tfr_enumerate_minimal(const tfr_scenario* s, const char* target, int with_oracle,
                                 tfr_enumeration* summary, tfr_text** table, tfr_text** csv) {
  if (!s || !summary) return fail(TFR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const ProtocolTrace trace = run_protocol(s->topology, s->variant, s->n, s->seed);
    const SymbolicExpr goal = target_of(trace, target);
    const auto minimal = min_breaking_coalitions(trace, goal);
    const auto all = all_intermediary_verdicts(trace, goal);

    *summary = {};
    summary->minimal_count = minimal.size();
    summary->checked = all.size();
    for (const auto& c : minimal) {
      if (summary->minimum_size == 0 || c.members.size() < summary->minimum_size) {
        summary->minimum_size = c.members.size();
      }
    }
    std::string text = "variant " + s->variant.name() + " on " +
                       shape_name(s->topology.shape()) + ", target " + goal.to_string() + "\n";
    text += "minimal breaking coalitions (" + std::to_string(minimal.size()) + "):\n";
    for (const auto& c : minimal) {
      text += "  " + c.to_string() + "  size " + std::to_string(c.members.size()) + "\n";
    }
    if (minimal.empty()) text += "  none: no intermediary coalition recovers the target\n";
    text += "minimum size: " + std::to_string(summary->minimum_size) + "\n";

    if (with_oracle) {
      const ProtocolTrace small = run_protocol(s->topology, s->variant, 1, s->seed);
      for (const auto& cv : all) {
        const OracleVerdict o = brute_force_secrecy(small, cv.coalition, goal);
        const bool broken = cv.status == Secrecy::Broken;
        if ((o == OracleVerdict::Broken) != broken || o == OracleVerdict::Partial) {
          ++summary->oracle_disagreements;
          text += "  oracle disagrees on " + cv.coalition.to_string() + "\n";
        }
      }
      text += "oracle cross-check: " + std::to_string(all.size()) + " coalitions, " +
              std::to_string(summary->oracle_disagreements) + " disagreements\n";
    }
    give(table, text);
    give(csv, coalition_report_csv(trace, all));
    if (summary->oracle_disagreements) {
      return fail(TFR_INTERNAL, "analyzer and oracle disagree");
    }
    return TFR_OK;
  });
}

tfr_status tfr_attack(const tfr_scenario* s, const char* coalition, tfr_text** narrative) {
  if (!s) return fail(TFR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const ProtocolTrace trace = run_protocol(s->topology, s->variant, s->n, s->seed);
    const Coalition c = Coalition::parse(coalition ? coalition : "");
    std::string text = "attack on " + s->variant.name() + " (" + shape_name(s->topology.shape()) +
                       ", n=" + std::to_string(s->n) + ", seed=" + std::to_string(s->seed) +
                       ") by " + (c.members.empty() ? "a passive eavesdropper" : c.to_string()) +
                       "\n";
    text += "observed messages:\n";
    for (const auto& m : trace.messages) {
      text += "  M" + std::to_string(m.index) + " " + m.sender.label() + "->" +
              m.receiver.label() + " = " + m.expr.to_string() + "\n";
    }
    const AdversaryView view = view_of(trace, c);
    if (!view.known_secrets.empty()) {
      text += "secrets held by the coalition:";
      for (const auto& id : view.known_secrets) text += " " + id.name();
      text += "\n";
    }

    std::vector<SymbolicExpr> targets;
    for (const auto& id : trace.nonces()) targets.push_back(SymbolicExpr::of(id));
    const SymbolicExpr key = trace.final_key();
    if (targets.size() != 1 || targets.front() != key) targets.push_back(key);

    bool key_broken = false;
    for (const auto& goal : targets) {
      const SecrecyVerdict v = is_recoverable(view, goal);
      if (!v.broken()) {
        text += goal.to_string() + ": not recoverable\n";
        continue;
      }
      const BitString recovered = replay_recovery(trace, *v.recovery);
      const BitString actual = eval(goal, trace.keys);
      text += goal.to_string() + " = " + describe_recovery(trace, *v.recovery) + "\n";
      text += "  recovered " + recovered.to_hex() + "\n  actual    " + actual.to_hex() +
              (recovered == actual ? "  (match)" : "  (MISMATCH)") + "\n";
      if (recovered != actual) {
        give(narrative, text);
        return fail(TFR_INTERNAL, "replayed recovery does not reproduce " + goal.to_string());
      }
      if (goal == key) key_broken = true;
    }
    if (!key_broken) {
      text += "no attack exists: the analyzer certifies that " +
              (c.members.empty() ? std::string("an eavesdropper") : c.to_string()) +
              " cannot recover the key " + key.to_string() + "\n";
      give(narrative, text);
      return TFR_SECURE;
    }
    text += "key " + key.to_string() + " recovered: " + eval(key, trace.keys).to_hex() +
            (eval(key, trace.keys) == trace.output_a ? " == K(A)" : " != K(A)") + "\n";
    give(narrative, text);
    return TFR_OK;
  });
}

tfr_status tfr_active_attack_leakage(double* max_bits) {
  if (!max_bits) return fail(TFR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    *max_bits = active_attack_check();
    return TFR_OK;
  });
}

void tfr_rate_params_default(tfr_rate_params* p) {
  if (!p) return;
  const RateParams d;
  *p = {d.alpha_db_per_km, d.c_tf, d.c_p2p, d.threshold_bps, d.serial_multipath ? 1 : 0};
}

}  // extern "C"

namespace {

RateParams from_c(const tfr_rate_params* p) {
  if (!p) throw Error(ErrorCode::InvalidArgument, "null rate parameters");
  RateParams r;
  r.alpha_db_per_km = p->alpha_db_per_km;
  r.c_tf = p->c_tf;
  r.c_p2p = p->c_p2p;
  r.threshold_bps = p->threshold_bps;
  r.serial_multipath = p->serial_multipath != 0;
  r.validate();
  return r;
}

std::vector<RateFamily> parse_families(std::string_view list) {
  std::vector<RateFamily> out;
  while (!list.empty()) {
    auto comma = list.find(',');
    auto token = list.substr(0, comma);
    if (!token.empty()) out.push_back(RateFamily::parse(token));
    if (comma == std::string_view::npos) break;
    list.remove_prefix(comma + 1);
  }
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "no rate families given");
  return out;
}

}  // namespace

extern "C" {

tfr_status tfr_rate_params_from_config(const char* text, tfr_rate_params* p) {
  if (!text || !p) return fail(TFR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const RateParams r = RateParams::from_config(Config::parse(text));
    *p = {r.alpha_db_per_km, r.c_tf, r.c_p2p, r.threshold_bps, r.serial_multipath ? 1 : 0};
    return TFR_OK;
  });
}

tfr_status tfr_rate_eval(const tfr_rate_params* p, const char* family, double km, double* rate) {
  if (!family || !rate) return fail(TFR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    *rate = RateFamily::parse(family).rate(km, from_c(p));
    return TFR_OK;
  });
}

tfr_status tfr_rate_max_range(const tfr_rate_params* p, int m, double* km) {
  if (!km) return fail(TFR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    *km = max_range(m, from_c(p));
    return TFR_OK;
  });
}

tfr_status tfr_rate_max_range_tf(const tfr_rate_params* p, double* km) {
  if (!km) return fail(TFR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    *km = max_range_tf(from_c(p));
    return TFR_OK;
  });
}

tfr_status tfr_rate_curves_csv(const tfr_rate_params* p, const char* families, double from_km,
                               double to_km, double step_km, tfr_text** csv) {
  if (!families || !csv) return fail(TFR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const RateParams params = from_c(p);
    give(csv, curves_to_csv(emit_curves(distance_grid(from_km, to_km, step_km),
                                        parse_families(families), params)));
    return TFR_OK;
  });
}

void tfr_wire_options_default(tfr_wire_options* o) {
  if (!o) return;
  *o = {-1, nullptr, nullptr, nullptr, nullptr, wire::OrchestrateOptions{}.timeout_ms};
}

tfr_status tfr_wire_orchestrate(const tfr_scenario* s, uint16_t base_port, const char* work_dir,
                                const tfr_wire_options* options, tfr_text** report,
                                tfr_text** key_hex) {
  if (!s || !work_dir) return fail(TFR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    wire::OrchestrateOptions o;
    if (options) {
      if (options->tamper_message >= 0) o.tamper_message = options->tamper_message;
      if (options->drop_key_node && options->drop_key_secret) {
        o.drop_key.emplace(Party::parse(options->drop_key_node),
                           SecretId::parse(options->drop_key_secret));
      }
      if (options->misconfigure_node && options->misconfigure_variant) {
        o.misconfigure.emplace(Party::parse(options->misconfigure_node),
                               options->misconfigure_variant);
      }
      if (options->timeout_ms > 0) o.timeout_ms = options->timeout_ms;
    }
    const wire::WireResult r =
        wire::orchestrate(s->topology, s->variant, s->n, s->seed, base_port, work_dir, o);
    give(report, r.report);
    give(key_hex, r.status == wire::WireStatus::Ok && r.key_a ? r.key_a->to_hex() : "");
    switch (r.status) {
      case wire::WireStatus::Ok: return TFR_OK;
      case wire::WireStatus::Abort: return fail(TFR_PROTOCOL_ABORT, "wire run aborted");
      case wire::WireStatus::ConfigError:
        return fail(TFR_INVALID_ARGUMENT, "wire configuration error");
    }
    return TFR_INTERNAL;
  });
}

int tfr_wire_run_node(const char* config_path) {
  if (!config_path) return wire::kExitConfig;
  try {
    return wire::run_node_from_file(config_path);
  } catch (...) {
    return wire::kExitConfig;
  }
}

}  // extern "C"
