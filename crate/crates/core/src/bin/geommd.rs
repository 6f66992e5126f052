fn main() {
    std::process::exit(geommd::cli::run(std::env::args_os()));
}
