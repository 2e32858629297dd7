fn main() {
    std::process::exit(mdc_auction::cli::main());
}
