#include "acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "oracles.hpp"
#include "reflexgrasp/campaign.hpp"
#include "reflexgrasp/controller.hpp"
#include "reflexgrasp/descent.hpp"
#include "reflexgrasp/errors.hpp"
#include "reflexgrasp/grasp_stability.hpp"
#include "reflexgrasp/qp.hpp"
#include "reflexgrasp/sim.hpp"

namespace reflex::accept {

using nlohmann::json;

namespace {

template <typename... Args>
std::string fmtn(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const CriterionInfo& info(int id) { return criteria().at(static_cast<std::size_t>(id - 1)); }

CriterionResult start(int id) {
  const CriterionInfo& c = info(id);
  CriterionResult r;
  r.id = c.id;
  r.name = c.name;
  r.title = c.title;
  return r;
}

template <typename F>
CriterionResult timed(F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  CriterionResult r = body();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

double rel_err(const MatrixXd& a, const MatrixXd& ref) {
  return (a - ref).norm() / std::max(ref.norm(), 1e-12);
}

VectorXd random_configuration(const RobotModel& m, std::mt19937_64& rng) {
  const VectorXd lo = m.q_min(), hi = m.q_max();
  VectorXd q(m.dof());
  for (int j = 0; j < m.dof(); ++j) {
    // Stay a little inside the limits so central differences stay in range.
    const double pad = 0.02 * (hi[j] - lo[j]);
    q[j] = std::uniform_real_distribution<double>(lo[j] + pad, hi[j] - pad)(rng);
  }
  return q;
}

// Object, target and pre-closure configuration of a single campaign scenario.
struct Prepared {
  Scenario scenario;
  VectorXd q0;
};

Prepared prepare(const RobotModel& model, ShapeKind family, double width, double level, std::uint64_t seed,
                 const ControllerParams& cp) {
  Scenario base = base_scenario(family, width);
  std::mt19937_64 rng(seed);
  Scenario sc = apply_perturbation(base, perturbation_for(family), level, rng);
  const ReachResult rr = reach(model, sc.object, model.home, sc.target, cp, 3.0);
  return {sc, rr.q};
}

}  // namespace

const std::vector<CriterionInfo>& criteria() {
  static const std::vector<CriterionInfo> list{
      {1, "table1_rates", "table1", "Descent convergence rates per shape family"},
      {2, "cancellation", "table1", "Gradient cancellation witnesses under PGD"},
      {3, "gradients", "oracles", "Analytic gradients and Jacobians against finite differences"},
      {4, "qp", "oracles", "QP solver against active-set enumeration"},
      {5, "end_to_end", "sim", "Reflexive grasp campaign"},
      {6, "state_machine", "controller", "Mode transition table and dropout reversion"},
      {7, "determinism", "determinism", "Byte-identical CSVs across repeated runs"},
      {8, "rates", "sim", "Integration, sensing and QP rate contract"},
  };
  return list;
}

bool selected(const CriterionInfo& c, const std::string& filter) {
  if (filter.empty() || filter == "all") return true;
  return filter == c.name || filter == c.group || filter == std::to_string(c.id);
}

CriterionResult table1_rates() {
  return timed([] {
    CriterionResult r = start(1);
    const Table1Config cfg;
    const Table1Result res = run_table1(cfg);
    bool ok = true;
    std::string detail;
    for (const auto& rate : res.rates) {
      ok = ok && rate.cfgd_rate >= 0.95 && rate.pgd_rate <= 0.20;
      r.metrics[to_string(rate.shape_kind)] = {{"pgd", rate.pgd_rate}, {"cfgd", rate.cfgd_rate}};
      detail += fmtn("%s pgd %.0f%% cfgd %.0f%%; ", to_string(rate.shape_kind), 100.0 * rate.pgd_rate,
                     100.0 * rate.cfgd_rate);
    }
    r.pass = ok && res.rates.size() == 3;
    r.detail = detail + "need cfgd >= 95%, pgd <= 20%";
    return r;
  });
}

CriterionResult cancellation_witness() {
  return timed([] {
    CriterionResult r = start(2);
    const Table1Result res = run_table1(Table1Config{});
    int witnesses = 0, local_minima = 0;
    for (const auto& row : res.rows) {
      if (row.method != DescentMethod::PGD || row.status != DescentStatus::LocalMinimum) continue;
      ++local_minima;
      if (row.final_tangent_grad_f < 1e-4 && row.final_tangent_grad_phi1 > 1e-2) ++witnesses;
    }
    r.metrics = {{"witnesses", witnesses}, {"pgd_local_minima", local_minima}};
    r.pass = witnesses >= 10;
    r.detail = fmtn("%d of %d PGD local minima have |P grad f| < 1e-4 with |P grad phi1| > 1e-2; need >= 10",
                    witnesses, local_minima);
    return r;
  });
}

CriterionResult gradient_oracles(const RobotModel& model) {
  return timed([&] {
    CriterionResult r = start(3);
    std::mt19937_64 rng(31337);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto rvec = [&] { return Vector3d(u(rng), u(rng), u(rng)); };

    // Contact pairs away from the arccos singularities.
    double worst_pair = 0.0;
    int pairs = 0;
    while (pairs < 1000) {
      ContactPaird cp{rvec(), rvec(), rvec(), rvec()};
      if ((cp.c2 - cp.c1).norm() < 0.1 || cp.n1.norm() < 0.1 || cp.n2.norm() < 0.1) continue;
      const double p1 = oracle::reference_angle(cp.n1, cp.c2 - cp.c1);
      const double p2 = oracle::reference_angle(cp.n2, cp.c1 - cp.c2);
      const double margin = 0.05;
      if (std::min({p1, p2, M_PI - p1, M_PI - p2}) < margin) continue;
      for (StabilityAngle which : {StabilityAngle::Phi1, StabilityAngle::Phi2}) {
        for (ContactIndex wrt : {ContactIndex::C1, ContactIndex::C2}) {
          auto phi = [&](const VectorXd& x) {
            Vector3d c1 = cp.c1, c2 = cp.c2;
            (wrt == ContactIndex::C1 ? c1 : c2) = x;
            return which == StabilityAngle::Phi1 ? oracle::reference_angle(cp.n1, c2 - c1)
                                                 : oracle::reference_angle(cp.n2, c1 - c2);
          };
          const VectorXd at = wrt == ContactIndex::C1 ? cp.c1 : cp.c2;
          const VectorXd fd = oracle::fd_gradient(phi, at, 1e-6);
          const Vector3d g = grad_phi(cp, which, wrt);
          worst_pair = std::max(worst_pair, rel_err(g, fd));
        }
      }
      ++pairs;
    }

    double worst_jx = 0.0, worst_jr = 0.0, worst_gamma = 0.0, worst_poe = 0.0;
    const double h = 1e-6;
    for (int trial = 0; trial < 100; ++trial) {
      const VectorXd q = random_configuration(model, rng);
      const KinematicState ks = forward_kinematics(model, q);
      const auto poe = oracle::poe_tip_positions(model, q);
      for (std::size_t i = 0; i < ks.tips.size(); ++i) {
        worst_poe = std::max(worst_poe, (poe[i] - ks.tips[i].x).norm());
        auto pos = [&](const VectorXd& x) -> VectorXd { return forward_kinematics(model, x).tips[i].x; };
        worst_jx = std::max(worst_jx, rel_err(ks.tips[i].Jx, oracle::fd_jacobian(pos, q, h)));
        MatrixXd jr(3, model.dof());
        for (int j = 0; j < model.dof(); ++j) {
          VectorXd qp = q, qm = q;
          qp[j] += h;
          qm[j] -= h;
          const Matrix3d Rp = forward_kinematics(model, qp).tips[i].R;
          const Matrix3d Rm = forward_kinematics(model, qm).tips[i].R;
          jr.col(j) = oracle::rotation_log(Rp * Rm.transpose()) / (2.0 * h);
        }
        worst_jr = std::max(worst_jr, rel_err(ks.tips[i].JR, jr));
      }
      const CollisionValues cv = collision_values(model, ks);
      auto gam = [&](const VectorXd& x) -> VectorXd { return collision_values(model, x).gamma; };
      worst_gamma = std::max(worst_gamma, rel_err(cv.jac, oracle::fd_jacobian(gam, q, h)));
    }

    r.metrics = {{"grad_phi", worst_pair}, {"Jx", worst_jx},   {"JR", worst_jr},
                 {"dGamma", worst_gamma},  {"poe_position", worst_poe}};
    r.pass = worst_pair < 1e-5 && worst_jx < 1e-5 && worst_jr < 1e-5 && worst_gamma < 1e-4 && worst_poe < 1e-9;
    r.detail = fmtn("max rel err grad_phi %.1e, Jx %.1e, JR %.1e, dGamma %.1e; tip position vs PoE %.1e m",
                    worst_pair, worst_jx, worst_jr, worst_gamma, worst_poe);
    return r;
  });
}

CriterionResult qp_oracle() {
  return timed([] {
    CriterionResult r = start(4);
    std::mt19937_64 rng(4242);
    double worst_gap = 0.0, worst_viol = 0.0;
    int solved = 0, checked = 0;
    for (int k = 0; k < 50; ++k) {
      const int n = 1 + static_cast<int>(rng() % 6);
      const int p = 1 + static_cast<int>(rng() % 8);
      const QpProblem prob = oracle::random_qp(rng, n, p);
      const oracle::OracleQp ref = oracle::enumerate_active_sets(prob);
      if (!ref.feasible) continue;
      ++checked;
      const QpSolution sol = solve_qp(prob);
      if (sol.status == QpStatus::Solved) ++solved;
      const double gap = std::abs(prob.objective(sol.x) - ref.objective) / std::max(1.0, std::abs(ref.objective));
      worst_gap = std::max(worst_gap, gap);
      worst_viol = std::max(worst_viol, constraint_violation(prob, sol.x));
    }
    r.metrics = {{"problems", checked}, {"solved", solved}, {"max_objective_gap", worst_gap},
                 {"max_violation", worst_viol}};
    r.pass = checked == 50 && solved == checked && worst_gap <= 1e-6 && worst_viol <= 1e-5;
    r.detail = fmtn("%d/%d solved, max objective gap %.1e, max violation %.1e", solved, checked, worst_gap,
                    worst_viol);
    return r;
  });
}

CriterionResult end_to_end(const RobotModel& model, int threads) {
  return timed([&] {
    CriterionResult r = start(5);
    CampaignConfig c;
    c.write_traces = false;
    c.threads = threads;
    const CampaignSummary s = run_campaign(model, c);
    int cfgd = 0, cfgd_stable = 0, pairs = 0, paired_ok = 0;
    for (std::size_t i = 0; i < s.rows.size(); ++i) {
      const CampaignRow& row = s.rows[i];
      if (row.variant != "cfgd") continue;
      ++cfgd;
      if (row.outcome == "Stable" && row.final_mean_angle_deg < 10.0 && row.time_s <= 10.0) ++cfgd_stable;
      for (const CampaignRow& other : s.rows) {
        if (other.scenario != row.scenario || other.variant != "vanilla") continue;
        ++pairs;
        if (row.final_mean_angle_deg <= other.final_mean_angle_deg) ++paired_ok;
      }
    }
    const double stable_rate = cfgd ? double(cfgd_stable) / cfgd : 0.0;
    const double paired_rate = pairs ? double(paired_ok) / pairs : 0.0;
    r.metrics = {{"scenarios", cfgd}, {"cfgd_stable_rate", stable_rate}, {"paired_rate", paired_rate}};
    for (const auto& a : s.aggregates) {
      r.metrics["aggregates"][a.variant] = {{"stable_rate", a.stable_rate}, {"mean_angle_deg", a.mean_angle_deg},
                                           {"p50", a.p50}};
    }
    r.pass = cfgd == 60 && stable_rate >= 0.9 && paired_rate >= 0.9;
    r.detail = fmtn("%d scenarios, cfgd Stable %.1f%%, cfgd <= vanilla in %.1f%% of pairs; need 90%% each", cfgd,
                    100.0 * stable_rate, 100.0 * paired_rate);
    return r;
  });
}

CriterionResult state_machine(const RobotModel& model) {
  return timed([&] {
    CriterionResult r = start(6);
    // Contacts on the y axis; the normals are tilted about x by `tilt` each,
    // which gives f = 2 * tilt.
    auto reading = [](bool a, bool b, double tilt) {
      std::vector<ContactState> s(2);
      s[0] = {a, Vector3d(0, -0.03, 0), Vector3d(0, std::cos(tilt), std::sin(tilt)), a ? 1.0 : 0.0};
      s[1] = {b, Vector3d(0, 0.03, 0), Vector3d(0, -std::cos(tilt), std::sin(tilt)), b ? 1.0 : 0.0};
      return s;
    };
    auto expected = [](Mode mode, bool all, bool below, int count, int hold, ControllerVariant v) {
      if (mode == Mode::Stable) return Mode::Stable;
      if (v == ControllerVariant::Vanilla) return all ? Mode::Stable : Mode::Closing;
      if (!all) return Mode::Closing;
      return below && count + 1 >= hold ? Mode::Stable : Mode::Adjusting;
    };

    int cases = 0, mismatches = 0;
    for (ControllerVariant v : {ControllerVariant::Reflex, ControllerVariant::Vanilla}) {
      for (int hold : {1, 5}) {
        ControllerParams p;
        p.variant = v;
        p.stable_hold_samples = hold;
        for (Mode mode : {Mode::Closing, Mode::Adjusting, Mode::Stable}) {
          for (int pattern = 0; pattern < 4; ++pattern) {
            for (bool below : {true, false}) {
              for (int count : {0, hold - 1}) {
                const bool a = pattern & 1, b = pattern & 2;
                ControllerState st = ControllerState::initial(2);
                st.mode = mode;
                st.stable_count = count;
                const double tilt = below ? 0.05 : 0.4;
                const ControllerState next = step_mode(st, reading(a, b, tilt), p);
                const Mode want = expected(mode, a && b, below, count, hold, v);
                ++cases;
                bool ok = next.mode == want;
                ok = ok && next.transitions == st.transitions + (want != mode ? 1 : 0);
                if (want == Mode::Closing) {
                  ok = ok && next.latched_normals[0].has_value() == a && next.latched_normals[1].has_value() == b;
                }
                if (!ok) ++mismatches;
              }
            }
          }
        }
      }
    }

    // Dropout injection over a few perturbed boxes under the reflex controller.
    int injected = 0, reverted = 0;
    ControllerParams cp;
    for (int k = 0; k < 4; ++k) {
      const Prepared pr = prepare(model, ShapeKind::Box, 0.04 + 0.01 * k, 0.5, 900 + k, cp);
      SimParams sp;
      sp.dropout_rate = 0.1;
      sp.seed = 77 + k;
      sp.max_time = 3.0;
      Simulator sim(model, pr.scenario.object, pr.q0, cp, sp);
      const RunResult rr = sim.run();
      for (const auto& d : rr.dropouts) {
        if (d.before != Mode::Adjusting) continue;
        ++injected;
        if (d.after == Mode::Closing) ++reverted;
      }
    }
    r.metrics = {{"cases", cases}, {"mismatches", mismatches}, {"dropouts_in_adjusting", injected},
                 {"reverted", reverted}};
    r.pass = mismatches == 0 && injected > 0 && reverted == injected;
    r.detail = fmtn("%d/%d transition cases match; %d/%d dropouts during Adjusting reverted to Closing",
                    cases - mismatches, cases, reverted, injected);
    return r;
  });
}

CriterionResult determinism(const RobotModel& model) {
  return timed([&] {
    CriterionResult r = start(7);
    const Table1Config tc;
    const bool table_same = table1_csv(run_table1(tc)) == table1_csv(run_table1(tc));

    CampaignConfig c;
    c.widths = {0.04, 0.06};
    c.sim.noise_sigma = 0.0005;
    c.sim.dropout_rate = 0.01;
    auto dump = [&] {
      const CampaignSummary s = run_campaign(model, c);
      std::string out = campaign_csv(s.rows);
      for (const auto& row : s.rows) out += trace_csv(row.trace);
      return out;
    };
    const std::string a = dump(), b = dump();
    const bool sim_same = a == b;
    r.metrics = {{"table1_identical", table_same}, {"sim_identical", sim_same}, {"sim_bytes", a.size()}};
    r.pass = table_same && sim_same;
    r.detail = fmtn("table1 CSV %s, sim CSV and traces (%zu bytes, noisy) %s", table_same ? "identical" : "differs",
                    a.size(), sim_same ? "identical" : "differ");
    return r;
  });
}

CriterionResult rate_contract(const RobotModel& model) {
  return timed([&] {
    CriterionResult r = start(8);
    ControllerParams cp;
    cp.sensor_rate = 200.0;
    cp.control_rate = 200.0;
    const Prepared pr = prepare(model, ShapeKind::Box, 0.05, 0.3, 5, cp);
    SimParams sp;
    sp.integration_rate = 1000.0;
    sp.max_time = 1.0;
    sp.stop_on_stable = false;
    Simulator sim(model, pr.scenario.object, pr.q0, cp, sp);
    const RunResult rr = sim.run();
    const WorldState& w = *rr.final_world;
    long qp_rows = 0;
    bool spaced = true;
    for (std::size_t i = 0; i < rr.trace.size(); ++i) {
      if (rr.trace[i].qp_status) ++qp_rows;
      if (std::abs(rr.trace[i].time - 0.005 * double(i)) > 1e-9) spaced = false;
    }
    r.metrics = {{"integration_steps", w.integration_steps}, {"sensor_samples", w.sensor_samples},
                 {"trace_rows", rr.trace.size()},         {"qp_solves", rr.qp_solves},
                 {"trace_qp_rows", qp_rows}};
    r.pass = rr.outcome != RunOutcome::Error && w.integration_steps == 1000 && w.sensor_samples == 200 &&
             rr.trace.size() == 200 && spaced && qp_rows <= 200 && rr.qp_solves <= 200 && qp_rows == rr.qp_solves;
    r.detail = fmtn("%ld integration steps, %ld sensor samples, %zu trace rows at 5 ms, %ld QP solves in trace",
                    w.integration_steps, w.sensor_samples, rr.trace.size(), qp_rows);
    return r;
  });
}

std::vector<CriterionResult> run(const RobotModel& model, const Options& opts) {
  bool any = false;
  for (const auto& c : criteria()) any = any || selected(c, opts.filter);
  if (!any) throw Error(ErrorKind::Config, "filter '" + opts.filter + "' matches no criterion");

  std::vector<CriterionResult> out;
  for (const auto& c : criteria()) {
    if (!selected(c, opts.filter)) continue;
    CriterionResult res;
    try {
      switch (c.id) {
        case 1: res = table1_rates(); break;
        case 2: res = cancellation_witness(); break;
        case 3: res = gradient_oracles(model); break;
        case 4: res = qp_oracle(); break;
        case 5: res = end_to_end(model, opts.threads); break;
        case 6: res = state_machine(model); break;
        case 7: res = determinism(model); break;
        default: res = rate_contract(model); break;
      }
    } catch (const std::exception& e) {
      res = start(c.id);
      res.pass = false;
      res.detail = std::string("threw: ") + e.what();
    }
    if (opts.on_result) opts.on_result(res);
    out.push_back(std::move(res));
  }
  return out;
}

json report_json(const std::vector<CriterionResult>& results) {
  json j;
  j["schema"] = 1;
  bool all = true;
  for (const auto& r : results) {
    all = all && r.pass;
    j["criteria"].push_back({{"id", r.id},
                             {"name", r.name},
                             {"title", r.title},
                             {"pass", r.pass},
                             {"detail", r.detail},
                             {"seconds", r.seconds},
                             {"metrics", r.metrics}});
  }
  j["all_pass"] = all;
  return j;
}

std::string format_line(const CriterionResult& r) {
  return fmtn("%s [%d] %s: %s (%.1f s)", r.pass ? "PASS" : "FAIL", r.id, r.title.c_str(), r.detail.c_str(),
              r.seconds);
}

}  // namespace reflex::accept
