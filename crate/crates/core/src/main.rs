fn main() {
    std::process::exit(cpa_contraction::cli::main_with_args(std::env::args_os()));
}
