fn main() {
    std::process::exit(fsi_core::cli::main_with_args(std::env::args_os()));
}
