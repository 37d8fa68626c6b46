def record_latency(name, millis):
    bucket = histogram(name)
    bucket.observe(millis)
