var a=1;