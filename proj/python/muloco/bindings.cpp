// Python bindings for the main operations: matrix kernels, codecs, the
// training loop, the fitting pipeline, the cost model, and the EMA smoother.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "muloco/analytics.hpp"
#include "muloco/cli_config.hpp"
#include "muloco/costmodel.hpp"
#include "muloco/evalsmooth.hpp"
#include "muloco/linalg.hpp"
#include "muloco/scaling_fit.hpp"

namespace py = pybind11;
using namespace muloco;

namespace {

Matrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2) throw ContractError("expected a 2-D array");
    const auto rows = static_cast<std::size_t>(arr.shape(0));
    const auto cols = static_cast<std::size_t>(arr.shape(1));
    std::vector<double> data(arr.data(), arr.data() + rows * cols);
    return Matrix(rows, cols, std::move(data));
}

py::array_t<double> to_array(const Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

CompressorSpec spec_from_dict(const py::dict& d) {
    CompressorSpec s;
    for (const auto& item : d) {
        const std::string key = py::cast<std::string>(item.first);
        if (key == "kind") {
            const std::string v = py::cast<std::string>(item.second);
            if (v == "none")
                s.kind = CompressorKind::none;
            else if (v == "topk")
                s.kind = CompressorKind::topk;
            else if (v == "quant")
                s.kind = CompressorKind::quant;
            else
                throw ContractError("spec kind must be none, topk, or quant");
        } else if (key == "k_pct") {
            s.k_pct = py::cast<double>(item.second);
        } else if (key == "bits") {
            s.bits = py::cast<int>(item.second);
        } else if (key == "scheme") {
            const std::string v = py::cast<std::string>(item.second);
            if (v == "linear")
                s.scheme = QuantScheme::linear;
            else if (v == "statistical")
                s.scheme = QuantScheme::statistical;
            else
                throw ContractError("spec scheme must be linear or statistical");
        } else if (key == "granularity") {
            const std::string v = py::cast<std::string>(item.second);
            if (v == "global")
                s.granularity = QuantGranularity::global;
            else if (v == "rowwise")
                s.granularity = QuantGranularity::rowwise;
            else
                throw ContractError("spec granularity must be global or rowwise");
        } else if (key == "error_feedback") {
            s.error_feedback = py::cast<bool>(item.second);
        } else if (key == "ef_beta") {
            s.ef_beta = py::cast<double>(item.second);
        } else {
            throw ContractError("unknown compressor key: " + key);
        }
    }
    s.validate();
    return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Deterministic laboratory for communication-efficient local-update training";

    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def("newton_schulz",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a, int iterations) {
              return to_array(newton_schulz(to_matrix(a), iterations));
          },
          py::arg("a"), py::arg("iterations") = 5);

    m.def("svd", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
        const Svd s = svd(to_matrix(a));
        return py::make_tuple(to_array(s.u), py::cast(s.sigma), to_array(s.v));
    });

    m.def("frobenius_norm",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
              return frobenius_norm(to_matrix(a));
          });
    m.def("nuclear_norm", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
        return nuclear_norm(to_matrix(a));
    });
    m.def("cosine_sim",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
              return cosine_sim(to_matrix(a), to_matrix(b));
          });

    m.def("interference_gap",
          [](const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>& arrays,
             int top_s) {
              std::vector<Matrix> deltas;
              deltas.reserve(arrays.size());
              for (const auto& a : arrays) deltas.push_back(to_matrix(a));
              return interference_gap(deltas, top_s);
          },
          py::arg("deltas"), py::arg("top_s"));

    m.def("compress_roundtrip",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
             const py::dict& spec) {
              const CompressorSpec s = spec_from_dict(spec);
              return to_array(decode(encode(to_matrix(a), s)));
          },
          py::arg("a"), py::arg("spec"));

    m.def("comm_bytes",
          [](const py::dict& spec, std::size_t rows, std::size_t cols, int workers) {
              const WireBytes wb = comm_bytes(spec_from_dict(spec), rows, cols, workers);
              return py::make_tuple(wb.sent, wb.received);
          },
          py::arg("spec"), py::arg("rows"), py::arg("cols"), py::arg("workers"));

    m.def("smoothed_final_loss",
          [](const std::vector<std::pair<long, double>>& points, double alpha, long sync_interval) {
              LossTrajectory traj{points, sync_interval};
              return smoothed_final_loss(traj, alpha, sync_interval);
          },
          py::arg("points"), py::arg("alpha") = 0.2, py::arg("sync_interval") = 30);

    m.def("run_experiment",
          [](const std::string& config_json, int threads) {
              const ExperimentConfig cfg = ExperimentConfig::parse_string(config_json, "<config>");
              py::list out;
              for (const auto& resolved : cfg.expand()) {
                  const auto task = resolved.task.instantiate();
                  const RunResult res = run(resolved.run, *task, threads > 0 ? threads : cfg.threads);
                  py::dict d;
                  d["name"] = resolved.name;
                  py::list rounds;
                  for (const auto& r : res.rounds) {
                      py::dict rd;
                      rd["round"] = r.round;
                      rd["raw_eval_loss"] = r.raw_eval_loss;
                      rd["smoothed_eval_loss"] = r.smoothed_eval_loss;
                      rd["sent_bytes"] = r.comm.sent_bytes_per_worker;
                      rd["received_bytes"] = r.comm.received_bytes_per_worker;
                      rounds.append(rd);
                  }
                  d["rounds"] = rounds;
                  py::dict params;
                  for (const auto& p : res.theta) params[p.name.c_str()] = to_array(p.value);
                  d["theta"] = params;
                  out.append(d);
              }
              return out;
          },
          py::arg("config_json"), py::arg("threads") = 1);

    m.def("fit_power_law",
          [](const std::vector<std::tuple<std::string, double, double>>& data, const std::string& form,
             int restarts, std::uint64_t seed) {
              std::vector<FitDatum> fd;
              for (const auto& [method, x, loss] : data) fd.push_back({method, 1, x, loss});
              FitForm f;
              if (form == "plain")
                  f = FitForm::plain;
              else if (form == "per_method_offset")
                  f = FitForm::per_method_offset;
              else if (form == "joint_irr")
                  f = FitForm::joint_irr;
              else
                  throw ContractError("form must be plain, per_method_offset, or joint_irr");
              const PowerLawFit fit = fit_power_law(fd, f, restarts, seed);
              py::dict d;
              d["objective"] = fit.objective;
              d["train_residual"] = fit.train_residual;
              d["shared_irr"] = fit.shared_irr;
              py::list methods;
              for (const auto& mfit : fit.methods) {
                  py::dict md;
                  md["method"] = mfit.method;
                  md["a"] = mfit.a;
                  md["alpha"] = mfit.alpha;
                  md["offset"] = mfit.offset;
                  methods.append(md);
              }
              d["methods"] = methods;
              return d;
          },
          py::arg("data"), py::arg("form") = "plain", py::arg("restarts") = 64, py::arg("seed") = 0);

    m.def("critical_batch",
          [](const std::vector<std::pair<double, double>>& batch_loss) {
              std::vector<FitDatum> data;
              for (const auto& [b, l] : batch_loss) data.push_back({"m", 1, b, l});
              const CriticalBatch cb = critical_batch(data);
              return py::make_tuple(cb.b_opt, cb.b_crit, cb.boundary);
          },
          py::arg("batch_loss"));

    m.def("estimate_wallclock",
          [](double bandwidth_bps, double model_bytes, double compute_step_s, double optimizer_step_s,
             int workers, int inner_steps, long steps_total, const std::string& collective,
             const py::dict& compressor, int streaming_partitions) {
              CostConfig cfg;
              cfg.bandwidth_bps = bandwidth_bps;
              cfg.model_bytes = model_bytes;
              cfg.compute_step_s = compute_step_s;
              cfg.optimizer_step_s = optimizer_step_s;
              cfg.workers = workers;
              cfg.inner_steps = inner_steps;
              cfg.steps_total = steps_total;
              cfg.streaming_partitions = streaming_partitions;
              if (collective == "ring_allreduce")
                  cfg.collective = Collective::ring_allreduce;
              else if (collective == "a2a_rs_then_ag")
                  cfg.collective = Collective::a2a_rs_then_ag;
              else if (collective == "allgather")
                  cfg.collective = Collective::allgather;
              else
                  throw ContractError("unknown collective");
              cfg.compressor = spec_from_dict(compressor);
              const WallclockBreakdown wc = estimate_wallclock(cfg);
              py::dict d;
              d["total_s"] = wc.total_s;
              d["compute_s"] = wc.compute_s;
              d["optimizer_s"] = wc.optimizer_s;
              d["comm_s"] = wc.comm_s;
              d["sync_events"] = wc.sync_events;
              d["peak_event_bytes"] = wc.peak_event_bytes;
              d["total_comm_bytes"] = wc.total_comm_bytes;
              return d;
          },
          py::arg("bandwidth_bps"), py::arg("model_bytes"), py::arg("compute_step_s"),
          py::arg("optimizer_step_s"), py::arg("workers") = 1, py::arg("inner_steps") = 30,
          py::arg("steps_total") = 30, py::arg("collective") = "ring_allreduce",
          py::arg("compressor") = py::dict(), py::arg("streaming_partitions") = 1);
}
