fn main() {
    std::process::exit(dqn_lambda::cli::run(std::env::args_os()));
}
