fn main() {
    eprintln!("pathdec: not yet wired up");
    std::process::exit(2);
}
