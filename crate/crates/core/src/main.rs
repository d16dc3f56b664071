fn main() {
    std::process::exit(koopman_stitch::cli::main_with_args(std::env::args_os()));
}
