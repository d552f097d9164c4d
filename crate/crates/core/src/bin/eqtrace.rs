fn main() {
    std::process::exit(eqtrace::harness::main_with_args(std::env::args_os()));
}
