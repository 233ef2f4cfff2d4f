use env_logger::Env;

fn main() {
    env_logger::Builder::from_env(Env::new().filter("CARPENTER_LOG")).init();
    std::process::exit(carpenter_core::cli::main_with_args(std::env::args_os()));
}
