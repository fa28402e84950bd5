#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "commands.hpp"
#include "svtr/error.hpp"

namespace {

std::string one_line(std::string text) {
  for (char& c : text)
    if (c == '\n' || c == '\r') c = ' ';
  while (!text.empty() && text.back() == ' ') text.pop_back();
  return text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene text recognition with a staged local/global mixing transformer"};
  app.name("svtr");
  app.require_subcommand(1, 1);
  svtr::cli::add_params_command(app);
  svtr::cli::add_flops_command(app);
  svtr::cli::add_gen_data_command(app);
  svtr::cli::add_train_command(app);
  svtr::cli::add_eval_command(app);
  svtr::cli::add_infer_command(app);
  svtr::cli::add_attn_dump_command(app);
  svtr::cli::add_gradcheck_command(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << '\n';
    return 2;
  } catch (const svtr::Error& e) {
    std::cout.flush();
    std::cerr << "error: " << svtr::to_string(e.kind()) << ": " << one_line(e.what()) << '\n';
    return e.kind() == svtr::ErrorKind::kUsage ? 2 : 1;
  } catch (const std::exception& e) {
    std::cout.flush();
    std::cerr << "error: internal: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 0;
}
