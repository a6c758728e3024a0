fn main() {
    std::process::exit(cyclequeue::cli::main_with(std::env::args_os()));
}
