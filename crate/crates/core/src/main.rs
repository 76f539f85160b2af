fn main() {
    std::process::exit(tradewinds::cli::run(std::env::args_os()));
}
