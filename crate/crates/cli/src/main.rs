fn main() {
    std::process::exit(userboost_cli::run(std::env::args_os()));
}
