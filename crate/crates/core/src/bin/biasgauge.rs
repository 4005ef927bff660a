fn main() {
    std::process::exit(biasgauge::cli::run(std::env::args_os()));
}
