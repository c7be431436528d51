fn main() {
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Warn)
        .format_timestamp(None)
        .init();
    std::process::exit(wtal::cli::run(std::env::args_os()));
}
