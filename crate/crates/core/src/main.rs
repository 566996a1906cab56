fn main() {
    std::process::exit(maneuver_core::cli::run(std::env::args_os()));
}
