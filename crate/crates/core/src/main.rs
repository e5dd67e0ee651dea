fn main() {
    std::process::exit(bias_triggers::cli::run(std::env::args_os()));
}
