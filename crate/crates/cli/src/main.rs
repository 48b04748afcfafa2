fn main() {
    std::process::exit(krrbw_cli::run(std::env::args_os()));
}
