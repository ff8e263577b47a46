async function fetchRetry(url, attempts) {
  let lastError = null;
  for (let i = 0; i < attempts; i++) {
    try {
      const response = await fetch(url, { credentials: "include" });
      if (response.ok) {
        return response.json();
      }
      lastError = new Error(`status ${response.status}`);
    } catch (err) {
      lastError = err;
    }
    await new Promise((resolve) => setTimeout(resolve, 2 ** i * 100));
  }
  throw lastError;
}
