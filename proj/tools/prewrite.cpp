// prewrite: command-line front end for the rewriting and evaluation pipeline.

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

#include "prewrite/common/error.hpp"
#include "prewrite/pipeline/pipeline.hpp"

using namespace prewrite;

namespace {

struct Options {
  std::string run_id;
  std::string config;
  std::string group = "domain-intent";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> also;
  std::string host;
  int port = 0;
  std::string static_dir;
  bool prepare_only = false;
};

annotsvc::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

pipeline::Config load(const Options& o) {
  auto cfg = pipeline::Config::load(o.config);
  if (!o.run_id.empty()) cfg.run_id = o.run_id;
  if (o.seed) cfg.seed = *o.seed;
  return cfg;
}

void print(const pipeline::StageSummary& s) {
  std::cout << to_string(s.stage) << ": " << (s.skipped ? "already complete, skipped" : s.message) << "\n";
}

int serve(pipeline::Run& run, const Options& o) {
  auto tasks = run.prepare_annotation();
  std::cout << tasks.size() << " annotation tasks in " << (run.dir() / "annotation").string() << "\n";
  if (o.prepare_only) return 0;

  const auto& ac = run.config().annotation;
  annotsvc::RatingStore store(std::move(tasks), system_clock(), run.dir() / "annotation" / "ratings.jsonl");
  std::optional<std::filesystem::path> static_dir = ac.static_dir;
  if (!o.static_dir.empty()) static_dir = o.static_dir;
  annotsvc::Server server(store, static_dir);
  const auto host = o.host.empty() ? ac.host : o.host;
  const int port = server.bind(host, o.port ? o.port : ac.port);
  if (port < 0) throw Error(ErrorCode::kIoFailure, "cannot bind " + host);
  std::cout << "serving on http://" << host << ":" << port << "\n" << std::flush;
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.listen();
  g_server = nullptr;
  return 0;
}

int dispatch(const std::string& cmd, const Options& o) {
  auto grouping = pipeline::parse_grouping(o.group);
  if (!grouping) throw Error(ErrorCode::kConfig, "unknown --group '" + o.group + "'");
  pipeline::Run run(load(o));

  if (cmd == "ingest") print(run.ingest());
  else if (cmd == "select") print(run.select());
  else if (cmd == "rewrite") print(run.rewrite());
  else if (cmd == "simulate") print(run.simulate());
  else if (cmd == "judge") print(run.judge());
  else if (cmd == "report") {
    std::vector<std::filesystem::path> extra(o.also.begin(), o.also.end());
    run.report(*grouping, extra);
    std::cout << pipeline::grouped_table(run.report_input(extra), *grouping);
  } else if (cmd == "run") {
    for (const auto& s : run.run_all()) {
      if (s.stage != pipeline::Stage::kReport) print(s);
    }
    std::cout << "\n" << read_text_file(run.file("report.txt"));
  } else if (cmd == "annotate-serve") {
    return serve(run, o);
  } else if (cmd == "consolidate-aspects") {
    std::cout << "consolidate-aspects: " << run.consolidate_aspects().message << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt rewriting and evaluation pipeline"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--run", o.run_id, "Run id; overrides run_id in the config");
    sub->add_option("--seed", o.seed, "Order-assignment seed; fixed once the run starts");
    sub->add_option("--group", o.group, "domain-intent | domain | depth | models | overall");
  };
  const std::pair<const char*, const char*> commands[] = {
      {"ingest", "Parse and filter the conversation log"},
      {"select", "Select candidate turns preceding dissatisfaction"},
      {"rewrite", "Rewrite candidate prompts"},
      {"simulate", "Simulate chatbot responses to the rewrites"},
      {"judge", "Compare original and rewritten endings"},
      {"report", "Write win/loss/tie reports"},
      {"run", "All stages from ingest to report"},
      {"annotate-serve", "Create annotation tasks and serve the annotation API"},
      {"consolidate-aspects", "Consolidate aspect labels and count them per group"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    common(sub);
    if (std::string(name) == "report") {
      sub->add_option("--also", o.also, "Further run directories to include (cross-model tables)");
    }
    if (std::string(name) == "annotate-serve") {
      sub->add_option("--host", o.host, "Bind address");
      sub->add_option("--port", o.port, "Port; 0 picks a free one");
      sub->add_option("--static", o.static_dir, "Directory with the annotation UI");
      sub->add_flag("--prepare-only", o.prepare_only, "Write the tasks and exit");
    }
  }
  CLI11_PARSE(app, argc, argv);

  const auto cmd = app.get_subcommands().front()->get_name();
  try {
    return dispatch(cmd, o);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
