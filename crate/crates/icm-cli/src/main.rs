fn main() {
    println!("icm");
}
