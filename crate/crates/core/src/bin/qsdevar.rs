fn main() {
    std::process::exit(qsdevar::cli::main_with_args(std::env::args_os()));
}
