function sendBeacon(endpoint, payload) {
  var body = JSON.stringify(payload);
  if (navigator.sendBeacon) {
    return navigator.sendBeacon(endpoint, body);
  }
  var xhr = new XMLHttpRequest();
  xhr.open("POST", endpoint, false);
  xhr.setRequestHeader("Content-Type", "text/plain");
  xhr.send(body);
  return xhr.status >= 200 && xhr.status < 300;
}
