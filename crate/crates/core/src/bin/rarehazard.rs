fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RAREHAZARD_LOG", "warn")).init();
    std::process::exit(rarehazard::cli::run(std::env::args_os()));
}
