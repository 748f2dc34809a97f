// placeholder while the library stabilizes
int main() { return 0; }
