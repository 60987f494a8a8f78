#include <csignal>
#include <iostream>
#include <pthread.h>

#include "CLI11.hpp"
#include "leca/commands.hpp"
#include "leca/service.hpp"

namespace {

using namespace leca;
namespace fs = std::filesystem;

struct ServeOptions {
  std::optional<fs::path> config;
  std::optional<std::string> host;
  std::optional<int> port;
  std::optional<fs::path> data_dir;
};

int serve(const ServeOptions& o) {
  service::ServiceConfig cfg = o.config ? service::load_service_config(*o.config) : service::ServiceConfig{};
  if (o.host) cfg.host = *o.host;
  if (o.port) cfg.port = *o.port;
  if (o.data_dir) cfg.data_dir = *o.data_dir;

  // Handle SIGINT/SIGTERM on a dedicated thread so shutdown is orderly.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  service::SessionStore store(cfg);
  for (const auto& e : store.recovery_errors()) std::cerr << "recovery: " << e << "\n";
  service::HttpServer server(store);
  const int port = server.bind(cfg.host, cfg.port);
  std::cout << "listening http://" << cfg.host << ":" << port << " data_dir=" << cfg.data_dir.string()
            << " sessions=" << store.size() << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.run();
  // Wake the waiter if the server stopped for another reason.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return cli::ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LECA: extortion-based pricing in a repeated Cournot duopoly"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "leca 1.0.0");

  cli::CalibrateOptions cal;
  std::string params;
  auto* calibrate = app.add_subcommand("calibrate", "Reference points, stationary pair and the largest valid k");
  calibrate->add_option("--params", params, "Market parameters JSON file")->check(CLI::ExistingFile);
  calibrate->add_option("--k", cal.k, "Extortion parameter to report on")->capture_default_str();
  calibrate->add_option("--n", cal.n, "Cycle length for the validity check (1-4)")->capture_default_str();
  std::string surface, deviation;
  calibrate->add_option("--surface-csv", surface, "Write the response curve y(x) for --k");
  calibrate->add_option("--surface-step", cal.surface_step, "Grid step of the response curve")->capture_default_str();
  calibrate->add_option("--deviation-csv", deviation, "Write the best 2-cycle deviation per k");
  calibrate->add_option("--deviation-k-lo", cal.deviation_k_lo)->capture_default_str();
  calibrate->add_option("--deviation-k-hi", cal.deviation_k_hi)->capture_default_str();
  calibrate->add_option("--deviation-k-step", cal.deviation_k_step)->capture_default_str();
  calibrate->add_option("--deviation-x1", cal.deviation_x1, "First quantity of the deviation loop")->capture_default_str();
  calibrate->add_flag("--skip-k-max", cal.skip_k_max, "Do not search for the largest valid k");

  cli::SimulateOptions sim;
  std::string agent_kind = "collusive", agent_json, sim_config, sim_out, sim_out_dir;
  std::optional<double> agent_k, x0, eps_start, eps_end;
  std::optional<int> horizon, buckets, hold;
  std::vector<double> sequence;
  auto* simulate = app.add_subcommand("simulate", "Play sessions against a simulated rival and write JSONL logs");
  simulate->add_option("--agent", agent_kind,
                       "stationary | collusive | myopic_best_response | cycle | random_uniform | epsilon_greedy_learner")
      ->capture_default_str();
  simulate->add_option("--agent-json", agent_json, "Agent spec JSON file (overrides --agent)")->check(CLI::ExistingFile);
  simulate->add_option("--x0", x0, "Quantity of the stationary agent");
  simulate->add_option("--agent-k", agent_k, "k the collusive agent optimises against");
  simulate->add_option("--sequence", sequence, "Quantities of the cycle agent")->delimiter(',');
  simulate->add_option("--epsilon-start", eps_start);
  simulate->add_option("--epsilon-end", eps_end);
  simulate->add_option("--horizon", horizon, "Rounds over which epsilon decays");
  simulate->add_option("--buckets", buckets);
  simulate->add_option("--hold", hold, "Rounds each learner choice is held");
  simulate->add_option("--config", sim_config, "Session config JSON file")->check(CLI::ExistingFile);
  simulate->add_option("--k", sim.k, "Extortion parameter of the algorithm");
  simulate->add_option("--rounds", sim.rounds);
  simulate->add_option("--seed", sim.seed, "Seed; session i uses seed + i")->capture_default_str();
  simulate->add_option("--sessions", sim.sessions)->capture_default_str();
  simulate->add_option("--out", sim_out, "Log file (default: stdout)");
  simulate->add_option("--out-dir", sim_out_dir, "Directory for session-<seed>.jsonl files");

  cli::AnalyzeOptions ana;
  std::vector<std::string> inputs;
  std::string window, ana_out_dir;
  auto* analyze = app.add_subcommand("analyze", "Summary table, test battery and per-round median series");
  analyze->add_option("inputs", inputs, "Session logs or directories")->required();
  analyze->add_option("--window", window, "Round window FIRST-LAST, e.g. 301-600");
  analyze->add_option("--out-dir", ana_out_dir, "Write summary.csv, battery.csv and timeseries.csv here");
  analyze->add_option("--nash-profit", ana.nash_profit, "Benchmark profit for the test battery")->capture_default_str();

  cli::ExportOptions exp;
  std::string exp_log, exp_out;
  auto* export_cmd = app.add_subcommand("export", "Convert a session log to CSV");
  export_cmd->add_option("--log", exp_log, "Session log")->required();
  export_cmd->add_option("--format", exp.format, "Output format (csv)")->capture_default_str();
  export_cmd->add_option("--out", exp_out, "Output file (default: stdout)");

  ServeOptions srv;
  std::string srv_config, srv_host, srv_dir;
  int srv_port = -1;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP session server");
  serve_cmd->add_option("--config", srv_config, "Service config JSON file")->check(CLI::ExistingFile);
  serve_cmd->add_option("--host", srv_host);
  serve_cmd->add_option("--port", srv_port);
  serve_cmd->add_option("--data-dir", srv_dir);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << cli::error_line(cli::validation, e.what()) << "\n";
    return cli::validation;
  }

  try {
    if (*calibrate) {
      if (!params.empty()) cal.params = params;
      if (!surface.empty()) cal.surface_csv = surface;
      if (!deviation.empty()) cal.deviation_csv = deviation;
      return cli::calibrate(cal, std::cout);
    }
    if (*simulate) {
      if (!agent_json.empty()) {
        sim.agent = agent_from_json(cli::read_json_file(agent_json));
      } else {
        sim.agent.kind = parse_agent_kind(agent_kind);
        if (x0) sim.agent.x0 = *x0;
        if (agent_k) sim.agent.k = *agent_k;
        sim.agent.sequence = sequence;
        if (eps_start) sim.agent.epsilon_start = *eps_start;
        if (eps_end) sim.agent.epsilon_end = *eps_end;
        if (horizon) sim.agent.horizon = *horizon;
        if (buckets) sim.agent.buckets = *buckets;
        if (hold) sim.agent.hold = *hold;
      }
      if (!sim_config.empty()) sim.config = sim_config;
      if (!sim_out.empty()) sim.out = sim_out;
      if (!sim_out_dir.empty()) sim.out_dir = sim_out_dir;
      return cli::simulate(sim, std::cout);
    }
    if (*analyze) {
      for (const auto& i : inputs) ana.inputs.emplace_back(i);
      if (!window.empty()) ana.window = cli::parse_window(window);
      if (!ana_out_dir.empty()) ana.out_dir = ana_out_dir;
      return cli::analyze(ana, std::cout);
    }
    if (*export_cmd) {
      exp.log = exp_log;
      if (!exp_out.empty()) exp.out = exp_out;
      return cli::export_log(exp, std::cout);
    }
    if (*serve_cmd) {
      if (!srv_config.empty()) srv.config = srv_config;
      if (!srv_host.empty()) srv.host = srv_host;
      if (srv_port >= 0) srv.port = srv_port;
      if (!srv_dir.empty()) srv.data_dir = srv_dir;
      return serve(srv);
    }
  } catch (const std::exception& e) {
    const int code = cli::exit_code_for(e);
    std::cerr << cli::error_line(code, e.what()) << "\n";
    return code;
  }
  return cli::internal;
}
