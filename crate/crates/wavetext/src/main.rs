fn main() {
    env_logger::init();
    std::process::exit(wavetext::cli::run(std::env::args().skip(1)));
}
