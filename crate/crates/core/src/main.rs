fn main() {
    std::process::exit(hmm_influence::cli::run(std::env::args_os()));
}
