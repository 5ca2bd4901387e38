fn main() {
    std::process::exit(relaxed_pat::cli::run(std::env::args_os()));
}
