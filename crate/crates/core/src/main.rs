fn main() {
    std::process::exit(bsde_lab::cli::main_with_args(std::env::args_os()));
}
