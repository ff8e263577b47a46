var b = 1; // hi
