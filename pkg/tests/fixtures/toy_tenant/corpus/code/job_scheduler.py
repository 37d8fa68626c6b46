class JobScheduler:
    def run_pending(self, now):
        for job in self.queue.due_jobs(now):
            self.consumer.dispatch(job)
