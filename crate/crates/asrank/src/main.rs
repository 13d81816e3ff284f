use std::process::exit;

fn main() {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("ASRANK_LOG", "error"),
    )
    .format_timestamp(None)
    .init();
    exit(asrank::cli::run(std::env::args_os()));
}
