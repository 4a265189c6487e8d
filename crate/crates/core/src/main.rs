fn main() {
    std::process::exit(kinlab::cli::main_entry());
}
