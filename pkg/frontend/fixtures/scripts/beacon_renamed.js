/* Ship one event to the collector, falling back to sync XHR. */
function emit(url, data) {
  var text = JSON.stringify(data); // serialize once
  if (navigator.sendBeacon) {
    return navigator.sendBeacon(url, text);
  }
  // Old engines: block until delivered.
  var req = new XMLHttpRequest();
  req.open("POST", url, false);
  req.setRequestHeader("Content-Type", "text/plain");
  req.send(text);
  return req.status >= 200 && req.status < 300;
}
