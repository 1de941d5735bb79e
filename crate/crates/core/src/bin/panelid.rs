fn main() {
    std::process::exit(panelid::cli::run());
}
