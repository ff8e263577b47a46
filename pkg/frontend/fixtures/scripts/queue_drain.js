class EventQueue {
  constructor(flush) {
    this.flush = flush;
    this.items = [];
  }

  get size() {
    return this.items.length;
  }

  push(item) {
    this.items.push(item);
    if (this.size >= EventQueue.BATCH) {
      this.drain();
    }
  }

  drain() {
    const batch = this.items.splice(0, this.items.length);
    if (batch.length > 0) {
      this.flush(batch);
    }
  }

  static get BATCH() {
    return 20;
  }
}
