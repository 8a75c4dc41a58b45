import os

# numba caps set_num_threads at NUMBA_NUM_THREADS, which defaults to the
# detected CPU count; raise it before numba is first imported so the
# thread-count determinism tests can request 8 threads on any machine
os.environ.setdefault("NUMBA_NUM_THREADS", "8")
