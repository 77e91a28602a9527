EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3
