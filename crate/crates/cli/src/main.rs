fn main() {
    gleams_cli::init_logging();
    std::process::exit(gleams_cli::run(std::env::args_os()));
}
