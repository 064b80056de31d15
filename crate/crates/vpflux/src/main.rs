fn main() {
    std::process::exit(vpflux::cli::main_entry());
}
