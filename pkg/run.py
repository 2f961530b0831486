#!/usr/bin/env python3
from kstop import main

main()
