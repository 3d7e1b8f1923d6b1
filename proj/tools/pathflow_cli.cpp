// Placeholder main; the experiment harness lands with the cli module.
int main() { return 0; }
