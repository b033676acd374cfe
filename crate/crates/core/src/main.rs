fn main() {
    std::process::exit(irsbim_core::cli::run(std::env::args_os()));
}
