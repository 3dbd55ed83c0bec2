#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ibsplit/errors.hpp"
#include "ibsplit/experiments.hpp"
#include "ibsplit/snapshots.hpp"

namespace py = pybind11;
using namespace ibsplit;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Field to_field(const Array& a, double half_length) {
  if (a.ndim() != 1) throw std::invalid_argument("expected a one-dimensional array of samples");
  const PeriodicGrid grid(half_length, static_cast<std::size_t>(a.shape(0)));
  return Field(grid, std::vector<double>(a.data(), a.data() + a.shape(0)));
}

Array to_array(const Field& f) {
  Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(f.size())});
  std::copy(f.values().begin(), f.values().end(), out.mutable_data());
  return out;
}

Array stack(const std::vector<const Field*>& fields) {
  const auto n = fields.empty() ? 0 : fields.front()->size();
  Array out({static_cast<py::ssize_t>(fields.size()), static_cast<py::ssize_t>(n)});
  double* p = out.mutable_data();
  for (const Field* f : fields) p = std::copy(f->values().begin(), f->values().end(), p);
  return out;
}

Array to_array(const std::vector<double>& v) {
  Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

StepControl make_control(const PeriodicGrid& grid, const PhysParams& params, std::optional<ModelFamily> family,
                         double t_end, std::size_t stride, std::optional<double> dt, const std::string& scheme) {
  const Scheme s = parse_scheme(scheme);
  const double bound = max_stable_dt(grid, params, family, s);
  return StepControl(dt ? *dt : bound, s, t_end, stride, bound);
}

py::dict record_dict(const RunRecord& r) {
  py::dict d;
  d["study"] = r.study;
  d["index"] = r.index;
  d["family"] = tag_name(r.tag);
  d["epsilon"] = r.epsilon;
  d["delta"] = r.delta;
  d["ok"] = r.ok;
  d["failure"] = r.failure;
  d["metrics"] = r.metrics;
  std::vector<double> t, s, rn, en, fp, fm, ft;
  for (const auto& row : r.rows) {
    t.push_back(row.time);
    s.push_back(row.s);
    rn.push_back(row.r_norm);
    en.push_back(row.energy);
    fp.push_back(row.f_plus);
    fm.push_back(row.f_minus);
    ft.push_back(row.f_tilde);
  }
  d["t"] = to_array(t);
  d["s"] = to_array(s);
  d["r_norm"] = to_array(rn);
  d["energy"] = to_array(en);
  d["f_plus"] = to_array(fp);
  d["f_minus"] = to_array(fm);
  d["f_tilde"] = to_array(ft);
  return d;
}

py::list records_list(const std::vector<RunRecord>& recs) {
  py::list out;
  for (const auto& r : recs) out.append(record_dict(r));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Spectral solvers and decoupling diagnostics for the improved Boussinesq equation";

  py::register_exception<BlowUpError>(m, "BlowUpError", PyExc_RuntimeError);
  py::register_exception<BlownUpFieldError>(m, "BlownUpFieldError", PyExc_RuntimeError);
  py::register_exception<RegimeViolationError>(m, "RegimeViolationError", PyExc_ValueError);
  py::register_exception<NonzeroMeanError>(m, "NonzeroMeanError", PyExc_ValueError);
  py::register_exception<SnapshotFormatError>(m, "SnapshotFormatError", PyExc_RuntimeError);

  m.def("grid_points", [](double L, std::size_t n) {
    const PeriodicGrid g(L, n);
    std::vector<double> x(n);
    for (std::size_t j = 0; j < n; ++j) x[j] = g.x(j);
    return to_array(x);
  }, py::arg("L"), py::arg("n"), "Nodes x_j = -L + j*2L/n.");

  m.def("derivative", [](const Array& f, double L, int order) { return to_array(spectral_derivative(to_field(f, L), order)); },
        py::arg("f"), py::arg("L"), py::arg("order") = 1);
  m.def("sobolev_norm", [](const Array& f, double L, double s) { return sobolev_norm(to_field(f, L), s); },
        py::arg("f"), py::arg("L"), py::arg("s"));
  m.def("helmholtz_inverse",
        [](const Array& f, double L, double delta, double coeff) {
          return to_array(apply_helmholtz_inverse(to_field(f, L), delta, coeff));
        },
        py::arg("f"), py::arg("L"), py::arg("delta"), py::arg("coeff") = 1.25,
        "(1 - coeff*delta^2 D^2)^{-1} f");

  m.def("split_initial_data",
        [](const Array& u0, const Array& v0, double L) {
          const auto [p, q] = split_initial_data(to_field(u0, L), to_field(v0, L));
          return py::make_tuple(to_array(p), to_array(q));
        },
        py::arg("u0"), py::arg("v0"), py::arg("L"));

  m.def("model_solve",
        [](const Array& w0, double L, double epsilon, double delta, const std::string& family, double t_end,
           std::size_t stride, std::optional<double> dt, std::optional<std::string> scheme) {
          const Field f = to_field(w0, L);
          const ModelFamily fam = parse_family(family);
          const PhysParams p{epsilon, delta, 2.0};
          const std::string sch = scheme ? *scheme : (fam.tag == ModelTag::kdv ? "IFRK4" : "RK4");
          std::vector<WaveState> traj;
          {
            py::gil_scoped_release release;
            traj = model_solve(f, p, fam, make_control(f.grid(), p, fam, t_end, stride, dt, sch));
          }
          std::vector<double> times;
          std::vector<const Field*> ws;
          for (const auto& s : traj) {
            times.push_back(s.time);
            ws.push_back(&s.w);
          }
          return py::make_tuple(to_array(times), stack(ws));
        },
        py::arg("w0"), py::arg("L"), py::arg("epsilon"), py::arg("delta"), py::arg("family"), py::arg("t_end"),
        py::arg("stride") = 1, py::arg("dt") = py::none(), py::arg("scheme") = py::none(),
        "Solve a model equation ('CH+', 'BBM-', 'KDV+', ...). Returns (times, w[snapshot, x]).");

  m.def("ib_solve",
        [](const Array& u0, const Array& v0, double L, double epsilon, double delta, double t_end, std::size_t stride,
           std::optional<double> dt) {
          const Field u = to_field(u0, L), v = to_field(v0, L);
          const PhysParams p{epsilon, delta, 2.0};
          std::vector<IBState> traj;
          {
            py::gil_scoped_release release;
            traj = ib_solve(u, v, p, make_control(u.grid(), p, std::nullopt, t_end, stride, dt, "RK4"));
          }
          std::vector<double> times;
          std::vector<const Field*> us, ps;
          for (const auto& s : traj) {
            times.push_back(s.time);
            us.push_back(&s.u);
            ps.push_back(&s.p);
          }
          return py::make_tuple(to_array(times), stack(us), stack(ps));
        },
        py::arg("u0"), py::arg("v0"), py::arg("L"), py::arg("epsilon"), py::arg("delta"), py::arg("t_end"),
        py::arg("stride") = 1, py::arg("dt") = py::none(),
        "Solve the IB equation with u_t(0) = (v0)_x. Returns (times, u, u_t).");

  m.def("residual_model",
        [](const Array& w, double L, double epsilon, double delta, const std::string& family) {
          const WaveState st{to_field(w, L), 0.0, PhysParams{epsilon, delta, 2.0}, parse_family(family)};
          return to_array(residual_model(st));
        },
        py::arg("w"), py::arg("L"), py::arg("epsilon"), py::arg("delta"), py::arg("family"));
  m.def("defining_residual",
        [](const Array& w, double L, double epsilon, double delta, const std::string& family) {
          const WaveState st{to_field(w, L), 0.0, PhysParams{epsilon, delta, 2.0}, parse_family(family)};
          return to_array(defining_residual(st));
        },
        py::arg("w"), py::arg("L"), py::arg("epsilon"), py::arg("delta"), py::arg("family"));

  m.def("fit_loglog_slope",
        [](const std::vector<double>& x, const std::vector<double>& y) {
          if (x.size() != y.size()) throw std::invalid_argument("x and y differ in length");
          std::vector<std::pair<double, double>> pts;
          for (std::size_t i = 0; i < x.size(); ++i) pts.emplace_back(x[i], y[i]);
          const RateFit f = fit_loglog_slope(pts);
          py::dict d;
          d["slope"] = f.slope;
          d["intercept"] = f.intercept;
          d["r_squared"] = f.r_squared;
          d["points"] = f.points;
          return d;
        },
        py::arg("x"), py::arg("y"));

  m.def("normalize_config", [](const std::string& text) {
    const auto cfg = ExperimentConfig::parse(text);
    cfg.validate();
    return cfg.serialize();
  }, py::arg("text"), "Parse, validate and re-serialize a study configuration.");

  auto study = [](auto runner) {
    return [runner](const std::string& text, std::optional<std::size_t> workers) {
      auto cfg = ExperimentConfig::parse(text);
      if (workers) cfg.workers = *workers;
      std::vector<RunRecord> recs;
      std::vector<CheckResult> checks;
      {
        py::gil_scoped_release release;
        recs = runner(cfg);
        checks = evaluate_checks(cfg, recs);
      }
      py::dict out;
      out["records"] = records_list(recs);
      out["csv"] = records_csv(recs);
      py::dict c;
      for (const auto& r : checks) {
        py::dict e;
        e["kind"] = r.kind;
        e["passed"] = r.passed;
        e["value"] = r.value;
        e["detail"] = r.detail;
        c[py::str(r.id)] = e;
      }
      out["checks"] = c;
      return out;
    };
  };
  m.def("run_decoupling_study", study([](const ExperimentConfig& c) { return run_decoupling_study(c); }),
        py::arg("config_text"), py::arg("workers") = py::none());
  m.def("run_residual_study", study([](const ExperimentConfig& c) { return run_residual_study(c); }),
        py::arg("config_text"), py::arg("workers") = py::none());
}
