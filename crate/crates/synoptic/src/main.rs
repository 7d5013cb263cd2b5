fn main() {
    std::process::exit(synoptic::cli::run(std::env::args_os()));
}
