#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "director/driver.hpp"

namespace py = pybind11;
using namespace director;

namespace {

Tensor tensor_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  Shape shape;
  for (ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(static_cast<int>(a.shape(i)));
  std::vector<float> data(a.data(), a.data() + a.size());
  return Tensor(shape, std::move(data));
}

py::array_t<float> array_from_tensor(const Tensor& t) {
  std::vector<ssize_t> shape;
  for (int i = 0; i < t.ndim(); ++i) shape.push_back(t.dim(i));
  py::array_t<float> out(shape);
  std::memcpy(out.mutable_data(), t.data(), sizeof(float) * size_t(t.numel()));
  return out;
}

py::dict step_to_dict(const EnvStep& s) {
  py::dict d;
  d["image"] = array_from_tensor(s.image);
  d["reward"] = s.reward;
  d["done"] = s.done;
  d["is_first"] = s.is_first;
  return d;
}

class PyEnv {
 public:
  explicit PyEnv(const std::string& name) : env_(make_env(name)) {}
  py::dict reset(uint64_t seed) { return step_to_dict(env_->reset(seed)); }
  py::dict step(int action) { return step_to_dict(env_->step(action)); }
  int num_actions() const { return env_->num_actions(); }
  std::vector<int> obs_shape() const {
    Shape s = env_->obs_shape();
    return {s.begin(), s.end()};
  }
  std::string id() const { return env_->id(); }

 private:
  std::unique_ptr<Env> env_;
};

class PyAgent {
 public:
  explicit PyAgent(const std::string& config_json)
      : cfg_(RunConfig::from_json(nlohmann::json::parse(config_json))),
        agent_(make_agent(cfg_)),
        rng_(derive_seed(cfg_.seed, 9)) {
    state_ = agent_->initial_actor_state();
  }

  void load(const std::string& checkpoint) { load_agent_checkpoint(checkpoint, *agent_); }

  int act(const py::array_t<float, py::array::c_style | py::array::forcecast>& image,
          bool is_first, bool eval_mode) {
    return agent_->act(state_, tensor_from_array(image), is_first, eval_mode, rng_);
  }

  py::array_t<float> encode_goal(
      const py::array_t<float, py::array::c_style | py::array::forcecast>& features) {
    return array_from_tensor(agent_->goal_ae().encode_sample(tensor_from_array(features), rng_));
  }

  py::array_t<float> decode_goal(
      const py::array_t<float, py::array::c_style | py::array::forcecast>& codes) {
    return array_from_tensor(agent_->goal_ae().decode(tensor_from_array(codes)));
  }

  int feature_width() const { return agent_->config().wm.feature_width(); }

 private:
  RunConfig cfg_;
  std::unique_ptr<DirectorAgent> agent_;
  DirectorAgent::ActorState state_;
  Rng rng_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hierarchical world-model agent with latent goals";

  m.def("default_config",
        [] { return RunConfig().to_json().dump(2); });
  m.def("validate_config", [](const std::string& text) {
    RunConfig::from_json(nlohmann::json::parse(text));
  });

  m.def("lambda_returns", &lambda_returns, py::arg("rewards"), py::arg("values"),
        py::arg("discount"), py::arg("lambda_"));
  m.def("max_cosine_reward",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& g,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& s) {
          return max_cosine_reward(tensor_from_array(g), tensor_from_array(s));
        });
  m.def("goal_reward",
        [](const std::string& kind,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& g,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& s) {
          return goal_reward_value(goal_reward_kind_from_string(kind), tensor_from_array(g),
                                   tensor_from_array(s));
        });

  py::class_<PyEnv>(m, "Env")
      .def(py::init<const std::string&>())
      .def("reset", &PyEnv::reset, py::arg("seed"))
      .def("step", &PyEnv::step, py::arg("action"))
      .def("num_actions", &PyEnv::num_actions)
      .def("obs_shape", &PyEnv::obs_shape)
      .def("id", &PyEnv::id);

  py::class_<PyAgent>(m, "Agent")
      .def(py::init<const std::string&>())
      .def("load", &PyAgent::load)
      .def("act", &PyAgent::act, py::arg("image"), py::arg("is_first"),
           py::arg("eval_mode") = false)
      .def("encode_goal", &PyAgent::encode_goal)
      .def("decode_goal", &PyAgent::decode_goal)
      .def("feature_width", &PyAgent::feature_width);

  m.def(
      "run_train",
      [](const std::string& config_json, const std::string& resume) {
        RunConfig cfg = RunConfig::from_json(nlohmann::json::parse(config_json));
        TrainResult res = run_train(cfg, resume);
        py::dict d;
        d["env_steps"] = res.env_steps;
        d["train_steps"] = res.train_steps;
        d["best_episode_return"] = res.best_episode_return;
        d["checkpoint"] = res.checkpoint_path;
        d["metrics"] = res.metrics_path;
        return d;
      },
      py::arg("config_json"), py::arg("resume") = std::string());

  m.def(
      "run_eval",
      [](const std::string& config_json, const std::string& checkpoint, int episodes,
         int episode_length, bool oracle) {
        RunConfig cfg = RunConfig::from_json(nlohmann::json::parse(config_json));
        EvalResult res = run_eval(cfg, checkpoint, episodes, episode_length, oracle);
        py::dict d;
        d["returns"] = res.returns;
        d["mean"] = res.mean;
        d["std"] = res.stddev;
        return d;
      },
      py::arg("config_json"), py::arg("checkpoint") = std::string(),
      py::arg("episodes") = 1, py::arg("episode_length") = 400, py::arg("oracle") = false);

  m.def(
      "visualize_goals",
      [](const std::string& config_json, const std::string& checkpoint, int length,
         const std::string& out) {
        RunConfig cfg = RunConfig::from_json(nlohmann::json::parse(config_json));
        VizResult res = visualize_goals(cfg, checkpoint, length, out);
        py::dict d;
        d["path"] = res.path;
        d["columns"] = res.columns;
        d["goal_change_steps"] = res.goal_change_steps;
        d["roundtrip_mse"] = res.roundtrip_mse;
        return d;
      },
      py::arg("config_json"), py::arg("checkpoint"), py::arg("length"), py::arg("out"));

  m.attr("__version__") = "0.1.0";
}
