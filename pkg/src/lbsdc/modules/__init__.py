# numerical modules
