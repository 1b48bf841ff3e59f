fn main() {
    std::process::exit(cfpo_cli::cli::main_with_args(std::env::args_os()));
}
