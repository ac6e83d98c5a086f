fn main() {
    std::process::exit(aronsson_core::cli::main_with_args(std::env::args_os()));
}
