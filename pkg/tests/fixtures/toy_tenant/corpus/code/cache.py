class SessionCache:
    def evict_expired(self, now):
        for key, entry in list(self.entries.items()):
            if entry.expires_at < now:
                del self.entries[key]
