const listeners = new Map();

function on(target, type, handler) {
  const wrapped = (event) => {
    try {
      handler(event);
    } finally {
      record(type);
    }
  };
  listeners.set(handler, wrapped);
  target.addEventListener(type, wrapped);
}

function off(target, type, handler) {
  const wrapped = listeners.get(handler);
  if (wrapped) {
    target.removeEventListener(type, wrapped);
    listeners.delete(handler);
  }
}

function record(type) {
  (window.__eventLog = window.__eventLog || []).push(type);
}
