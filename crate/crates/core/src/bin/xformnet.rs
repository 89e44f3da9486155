fn main() {
    std::process::exit(xformnet::cli::main_entry());
}
